#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lomar/image.hpp"
#include "lomar/rng.hpp"
#include "lomar/tensor.hpp"

namespace lomar {

/// Epsilon inside sqrt(var + eps) for per-patch target normalization.
inline constexpr double kTargetEps = 1e-6;

/// How target statistics are pooled within a patch.
enum class TargetNorm {
  joint,        // one mean/var over all patch_size²·channels values
  per_channel,  // separate mean/var per channel
};

struct GridCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

/// Image cut into non-overlapping square patches in raster order.
///
/// Patch i covers grid cell (i / grid_w, i % grid_w); inside a patch the
/// pixel vector is ordered (row, col, channel).
struct PatchGrid {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t patch_size = 0;
  std::size_t channels = 0;
  std::size_t patch_dim = 0;
  TargetNorm norm = TargetNorm::joint;
  std::vector<double> patches;             // num_patches × patch_dim
  std::vector<double> normalized_targets;  // num_patches × patch_dim
  // Statistics used for the targets: one entry per patch (joint) or per
  // patch and channel (per_channel). stddev is sqrt(var + eps).
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t num_patches() const { return grid_h * grid_w; }
  std::span<const double> patch(std::size_t i) const { return {patches.data() + i * patch_dim, patch_dim}; }
  std::span<const double> target(std::size_t i) const {
    return {normalized_targets.data() + i * patch_dim, patch_dim};
  }
  GridCoord coord(std::size_t index) const { return {index / grid_w, index % grid_w}; }
  std::size_t index(GridCoord c) const { return c.row * grid_w + c.col; }
};

/// Throws DimensionError unless height and width are multiples of patch_size.
PatchGrid patchify(const Image& image, std::size_t patch_size, TargetNorm norm = TargetNorm::joint);

/// Reassembles the raw patches into an image (exact inverse of patchify).
Image unpatchify(const PatchGrid& grid);

/// (x - mean) / sqrt(var + eps) over one vector.
std::vector<double> normalize_patch(std::span<const double> pixels, double eps = kTargetEps);

template <typename T>
struct PatchEmbedWeights {
  Tensor<T> projection;  // patch_dim × embed_dim
  Tensor<T> bias;        // embed_dim

  static PatchEmbedWeights init(std::size_t patch_dim, std::size_t embed_dim, Rng& rng);
  std::size_t patch_dim() const { return projection.rows(); }
  std::size_t embed_dim() const { return projection.cols(); }
};

/// Raw patches as a constant num_patches × patch_dim tensor.
template <typename T>
Tensor<T> patch_matrix(const PatchGrid& grid);

/// Row i = patches[i] · projection + bias.
template <typename T>
Tensor<T> embed_patches(const PatchGrid& grid, const PatchEmbedWeights<T>& weights);

/// Truncated normal (±2 std) initializer shared by all weight matrices.
template <typename T>
Tensor<T> trunc_normal(Shape shape, double stddev, Rng& rng);

}  // namespace lomar
