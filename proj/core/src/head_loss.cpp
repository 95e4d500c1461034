#include "lomar/head_loss.hpp"

#include <algorithm>

#include "lomar/error.hpp"
#include "lomar/ops.hpp"

namespace lomar {

template <typename T>
HeadWeights<T> HeadWeights<T>::init(std::size_t embed_dim, std::size_t hidden, std::size_t patch_dim, Rng& rng) {
  HeadWeights h;
  std::size_t in = embed_dim;
  if (hidden > 0) {
    h.hidden_w = trunc_normal<T>({embed_dim, hidden}, 0.02, rng);
    h.hidden_b = Tensor<T>::zeros({hidden}, true);
    in = hidden;
  }
  h.out_w = trunc_normal<T>({in, patch_dim}, 0.02, rng);
  h.out_b = Tensor<T>::zeros({patch_dim}, true);
  return h;
}

template <typename T>
void HeadWeights<T>::collect(ParamList<T>& out, const std::string& prefix) {
  if (has_hidden()) {
    out.push_back({prefix + "hidden.w", &hidden_w, true});
    out.push_back({prefix + "hidden.b", &hidden_b, false});
  }
  out.push_back({prefix + "out.w", &out_w, true});
  out.push_back({prefix + "out.b", &out_b, false});
}

template <typename T>
Tensor<T> reconstruct(const Tensor<T>& latents, const HeadWeights<T>& head) {
  if (latents.rank() != 2 || latents.cols() != head.embed_dim()) {
    throw DimensionError("reconstruct: latents " + shape_string(latents.shape()) + " vs head input " +
                         std::to_string(head.embed_dim()));
  }
  Tensor<T> x = latents;
  if (head.has_hidden()) x = ops::gelu(ops::add_bias(ops::matmul(x, head.hidden_w), head.hidden_b));
  return ops::add_bias(ops::matmul(x, head.out_w), head.out_b);
}

template <typename T>
Tensor<T> masked_mse_loss(const Tensor<T>& preds, const Tensor<T>& targets, const MaskPlan& plan) {
  if (preds.shape() != targets.shape() || preds.rank() != 2) {
    throw DimensionError("masked_mse: prediction/target shapes differ");
  }
  if (plan.masked.empty()) throw ContractError("masked_mse: no masked patches, loss undefined");
  if (preds.rows() != plan.window_len()) throw DimensionError("masked_mse: row count differs from window size");
  const std::size_t dim = preds.cols();
  const auto pv = preds.values();
  const auto tv = targets.values();
  T total = 0;
  for (std::size_t i : plan.masked) {
    T row = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      const T diff = pv[i * dim + j] - tv[i * dim + j];
      row += diff * diff;
    }
    total += row / T(dim);
  }
  const T count = T(plan.masked.size());
  return Tensor<T>::make_op("masked_mse", {1}, {total / count}, {preds, targets},
                            [preds, targets, masked = plan.masked, dim, count](TensorNode<T>& self) {
                              const T s = self.grad[0] * T(2) / (count * T(dim));
                              const auto pv = preds.values();
                              const auto tv = targets.values();
                              if (preds.requires_grad()) {
                                auto g = preds.grad_buffer();
                                for (std::size_t i : masked) {
                                  for (std::size_t j = 0; j < dim; ++j) {
                                    g[i * dim + j] += s * (pv[i * dim + j] - tv[i * dim + j]);
                                  }
                                }
                              }
                              if (targets.requires_grad()) {
                                auto g = targets.grad_buffer();
                                for (std::size_t i : masked) {
                                  for (std::size_t j = 0; j < dim; ++j) {
                                    g[i * dim + j] -= s * (pv[i * dim + j] - tv[i * dim + j]);
                                  }
                                }
                              }
                            });
}

template <typename T>
LossValue masked_mse(const Tensor<T>& preds, const Tensor<T>& targets, const MaskPlan& plan) {
  return {static_cast<double>(masked_mse_loss(preds, targets, plan).item()), plan.masked.size()};
}

template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& preds, const Tensor<T>& targets, const MaskPlan& plan,
                              LossScope scope) {
  if (scope == LossScope::masked) return masked_mse_loss(preds, targets, plan);
  return ops::mse(preds, targets);
}

std::vector<double> denormalize_prediction(std::span<const double> pred_row, double orig_mean, double orig_std) {
  std::vector<double> out(pred_row.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(pred_row[i] * orig_std + orig_mean, 0.0, 1.0);
  return out;
}

std::vector<double> denormalize_patch(const PatchGrid& grid, std::size_t index, std::span<const double> pred_row) {
  if (pred_row.size() != grid.patch_dim) throw DimensionError("denormalize_patch: row has wrong length");
  if (grid.norm == TargetNorm::joint) return denormalize_prediction(pred_row, grid.mean[index], grid.stddev[index]);
  const std::size_t ch = grid.channels;
  std::vector<double> out(pred_row.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = i % ch;
    out[i] = std::clamp(pred_row[i] * grid.stddev[index * ch + c] + grid.mean[index * ch + c], 0.0, 1.0);
  }
  return out;
}

#define LOMAR_INSTANTIATE_HEAD(T)                                                                          \
  template struct HeadWeights<T>;                                                                          \
  template Tensor<T> reconstruct<T>(const Tensor<T>&, const HeadWeights<T>&);                              \
  template Tensor<T> masked_mse_loss<T>(const Tensor<T>&, const Tensor<T>&, const MaskPlan&);              \
  template LossValue masked_mse<T>(const Tensor<T>&, const Tensor<T>&, const MaskPlan&);                   \
  template Tensor<T> reconstruction_loss<T>(const Tensor<T>&, const Tensor<T>&, const MaskPlan&, LossScope);

LOMAR_INSTANTIATE_HEAD(float)
LOMAR_INSTANTIATE_HEAD(double)

#undef LOMAR_INSTANTIATE_HEAD

}  // namespace lomar
