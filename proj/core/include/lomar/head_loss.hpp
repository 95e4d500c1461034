#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lomar/params.hpp"
#include "lomar/patchify.hpp"
#include "lomar/rng.hpp"
#include "lomar/sampler.hpp"
#include "lomar/tensor.hpp"

namespace lomar {

/// Reconstruction head: Linear(d→hidden) → GELU → Linear(hidden→patch_dim),
/// or a single Linear(d→patch_dim) when hidden is 0.
template <typename T>
struct HeadWeights {
  Tensor<T> hidden_w, hidden_b;  // undefined for the single-layer head
  Tensor<T> out_w, out_b;

  static HeadWeights init(std::size_t embed_dim, std::size_t hidden, std::size_t patch_dim, Rng& rng);
  bool has_hidden() const { return hidden_w.defined(); }
  std::size_t embed_dim() const { return has_hidden() ? hidden_w.rows() : out_w.rows(); }
  std::size_t patch_dim() const { return out_w.cols(); }
  void collect(ParamList<T>& out, const std::string& prefix = "head.");
};

struct LossValue {
  double value = 0.0;
  std::size_t masked_count = 0;
};

/// Which window rows contribute to the reconstruction loss.
enum class LossScope { masked, all };

template <typename T>
Tensor<T> reconstruct(const Tensor<T>& latents, const HeadWeights<T>& head);

/// Mean over masked rows of the per-row mean squared error. Throws
/// ContractError when the plan masks nothing.
template <typename T>
Tensor<T> masked_mse_loss(const Tensor<T>& preds, const Tensor<T>& targets, const MaskPlan& plan);

template <typename T>
LossValue masked_mse(const Tensor<T>& preds, const Tensor<T>& targets, const MaskPlan& plan);

/// masked_mse_loss for LossScope::masked, plain MSE over all rows otherwise.
template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& preds, const Tensor<T>& targets, const MaskPlan& plan,
                              LossScope scope);

/// pred · std + mean, clamped to [0, 1].
std::vector<double> denormalize_prediction(std::span<const double> pred_row, double orig_mean, double orig_std);

/// Inverts the target normalization of patch `index` (joint or per-channel).
std::vector<double> denormalize_patch(const PatchGrid& grid, std::size_t index, std::span<const double> pred_row);

}  // namespace lomar
