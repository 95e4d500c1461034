#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lomar/patchify.hpp"
#include "lomar/rng.hpp"
#include "lomar/tensor.hpp"

namespace lomar {

/// k×k block of the patch grid with origin (top, left).
struct WindowSpec {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t k = 1;
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// Masked window-local indices (sorted, unique, in [0, k²)).
struct MaskPlan {
  std::size_t k = 1;
  double ratio = 0.0;
  std::vector<std::size_t> masked;

  std::size_t window_len() const { return k * k; }
  std::size_t visible_count() const { return window_len() - masked.size(); }
  std::vector<bool> mask_vector() const;
  bool is_masked(std::size_t j) const;
  friend bool operator==(const MaskPlan&, const MaskPlan&) = default;
};

struct SamplerConfig {
  std::size_t k = 7;
  std::size_t n_views = 4;
  double mask_ratio = 0.8;
};

/// Views per image for a window side: 5→8, 7→4, 9→3, 11→2, 14→1.
/// Other sides keep the same visible-token budget, round(196 / k²) ≥ 1.
std::size_t default_views(std::size_t k);

/// floor(ratio · k²). Throws ParameterError for ratio outside [0, 1].
std::size_t masked_count(std::size_t k, double ratio);

/// n windows with origins drawn uniformly and independently; windows may
/// overlap. Throws DimensionError if k exceeds the grid.
std::vector<WindowSpec> sample_windows(std::size_t grid_h, std::size_t grid_w, std::size_t k, std::size_t n,
                                       Rng& rng);

/// Exactly floor(ratio·k²) indices drawn uniformly without replacement.
MaskPlan make_mask_plan(std::size_t k, double ratio, Rng& rng);

/// Global patch index of window-local raster index j.
std::size_t window_to_global(const WindowSpec& spec, std::size_t j, std::size_t grid_w);

/// Window-local index of a global patch index inside the window.
std::size_t global_to_window(const WindowSpec& spec, std::size_t index, std::size_t grid_w);

/// Global patch indices of the window in window-local raster order.
std::vector<std::size_t> window_indices(const WindowSpec& spec, std::size_t grid_w);

void check_window(const WindowSpec& spec, std::size_t grid_h, std::size_t grid_w);

template <typename T>
struct WindowInput {
  Tensor<T> tokens;   // k² × embed_dim
  Tensor<T> targets;  // k² × patch_dim (constant)
  std::vector<std::size_t> patch_index;
};

/// Tokens of one window in raster order. Masked rows are replaced by
/// `masked_row`, which is the projection bias (the embedding of an all-zero
/// patch) unless a learned mask token is in use.
template <typename T>
WindowInput<T> gather_window(const Tensor<T>& embeddings, const PatchGrid& grid, const WindowSpec& spec,
                             const MaskPlan& plan, const Tensor<T>& masked_row);

/// One-line text form: "k ratio i0 i1 ...".
std::string format_mask_plan(const MaskPlan& plan);
MaskPlan parse_mask_plan(const std::string& line);

}  // namespace lomar
