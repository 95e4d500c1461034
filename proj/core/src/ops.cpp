#include "lomar/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lomar/error.hpp"
#include "kernels.hpp"

namespace lomar::ops {

namespace {

template <typename T>
void require_matrix(const Tensor<T>& x, const char* op) {
  if (!x.defined() || x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix");
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename T>
void require_finite(const Tensor<T>& x, const char* op) {
  for (T v : x.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  if (b.rows() != q) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  std::vector<T> out(p * r, T(0));
  kernels::gemm_nn(p, q, r, a.values().data(), b.values().data(), out.data());
  return Tensor<T>::make_op("matmul", {p, r}, std::move(out), {a, b},
                            [a, b, p, q, r](TensorNode<T>& self) mutable {
                              const T* dc = self.grad.data();
                              if (a.requires_grad()) {
                                kernels::gemm_nt(p, r, q, dc, b.values().data(), a.grad_buffer().data());
                              }
                              if (b.requires_grad()) {
                                kernels::gemm_tn(p, q, r, a.values().data(), dc, b.grad_buffer().data());
                              }
                            });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t p = a.rows(), q = a.cols(), r = b.rows();
  if (b.cols() != q) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()) + "ᵀ");
  }
  std::vector<T> out(p * r, T(0));
  kernels::gemm_nt(p, q, r, a.values().data(), b.values().data(), out.data());
  return Tensor<T>::make_op("matmul_nt", {p, r}, std::move(out), {a, b},
                            [a, b, p, q, r](TensorNode<T>& self) mutable {
                              const T* dc = self.grad.data();
                              if (a.requires_grad()) {
                                kernels::gemm_nn(p, r, q, dc, b.values().data(), a.grad_buffer().data());
                              }
                              if (b.requires_grad()) {
                                kernels::gemm_tn(p, r, q, dc, a.values().data(), b.grad_buffer().data());
                              }
                            });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor<T>::make_op("add", a.shape(), std::move(out), {a, b}, [a, b](TensorNode<T>& self) mutable {
    for (const Tensor<T>* x : {&a, &b}) {
      if (!x->requires_grad()) continue;
      auto g = x->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor<T>::make_op("sub", a.shape(), std::move(out), {a, b}, [a, b](TensorNode<T>& self) mutable {
    if (a.requires_grad()) {
      auto g = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (b.requires_grad()) {
      auto g = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor<T>::make_op("mul", a.shape(), std::move(out), {a, b}, [a, b](TensorNode<T>& self) mutable {
    if (a.requires_grad()) {
      auto g = a.grad_buffer();
      auto bv = b.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto g = b.grad_buffer();
      auto av = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (T& v : out) v *= factor;
  return Tensor<T>::make_op("scale", x.shape(), std::move(out), {x}, [x, factor](TensorNode<T>& self) mutable {
    auto g = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_matrix(x, "add_bias");
  const std::size_t t = x.rows(), d = x.cols();
  if (bias.size() != d) {
    throw DimensionError("add_bias: bias of " + std::to_string(bias.size()) + " values for " +
                         std::to_string(d) + " columns");
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += bv[j];
  }
  return Tensor<T>::make_op("add_bias", x.shape(), std::move(out), {x, bias},
                            [x, bias, t, d](TensorNode<T>& self) mutable {
                              if (x.requires_grad()) {
                                auto g = x.grad_buffer();
                                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                              }
                              if (bias.requires_grad()) {
                                auto g = bias.grad_buffer();
                                for (std::size_t i = 0; i < t; ++i) {
                                  for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
                                }
                              }
                            });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_matrix(x, "softmax_rows");
  require_finite(x, "softmax_rows");
  const std::size_t t = x.rows(), c = x.cols();
  std::vector<T> out(t * c);
  auto xv = x.values();
  for (std::size_t i = 0; i < t; ++i) {
    const T* row = xv.data() + i * c;
    T* y = out.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T total = 0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(row[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= total;
  }
  auto result = Tensor<T>::make_op("softmax_rows", x.shape(), std::move(out), {x}, nullptr);
  if (result.requires_grad()) {
    // The closure needs the output values; capture the storage, not the node.
    auto y = result.node().value;
    result.node().backward = [x, y, t, c](TensorNode<T>& self) mutable {
      auto g = x.grad_buffer();
      for (std::size_t i = 0; i < t; ++i) {
        const T* yi = y->data() + i * c;
        const T* dy = self.grad.data() + i * c;
        T dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += dy[j] * yi[j];
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += yi[j] * (dy[j] - dot);
      }
    };
  }
  return result;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_matrix(x, "layer_norm");
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const std::size_t t = x.rows(), d = x.cols();
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: gamma/beta must have " + std::to_string(d) + " values");
  }
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  auto xhat = std::make_shared<std::vector<T>>(t * d);
  std::vector<T> inv_std(t);
  std::vector<T> out(t * d);
  for (std::size_t i = 0; i < t; ++i) {
    const T* row = xv.data() + i * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(d);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * inv_std[i];
      (*xhat)[i * d + j] = h;
      out[i * d + j] = h * gv[j] + bv[j];
    }
  }
  return Tensor<T>::make_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std = std::move(inv_std), t, d](TensorNode<T>& self) mutable {
        auto gv = gamma.values();
        if (gamma.requires_grad() || beta.requires_grad()) {
          for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
              const T dy = self.grad[i * d + j];
              if (gamma.requires_grad()) gamma.grad_buffer()[j] += dy * (*xhat)[i * d + j];
              if (beta.requires_grad()) beta.grad_buffer()[j] += dy;
            }
          }
        }
        if (!x.requires_grad()) return;
        auto g = x.grad_buffer();
        std::vector<T> dxhat(d);
        for (std::size_t i = 0; i < t; ++i) {
          T mean_dxhat = 0, mean_dxhat_xhat = 0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = self.grad[i * d + j] * gv[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * (*xhat)[i * d + j];
          }
          mean_dxhat /= T(d);
          mean_dxhat_xhat /= T(d);
          for (std::size_t j = 0; j < d; ++j) {
            g[i * d + j] += inv_std[i] * (dxhat[j] - mean_dxhat - (*xhat)[i * d + j] * mean_dxhat_xhat);
          }
        }
      });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  require_finite(x, "gelu");
  const T c = T(kGeluC), a = T(kGeluA);
  std::vector<T> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xv[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v)));
  }
  return Tensor<T>::make_op("gelu", x.shape(), std::move(out), {x}, [x, c, a](TensorNode<T>& self) mutable {
    auto g = x.grad_buffer();
    auto xv = x.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xv[i];
      const T th = std::tanh(c * (v + a * v * v * v));
      const T dinner = c * (T(1) + T(3) * a * v * v);
      g[i] += self.grad[i] * (T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * dinner);
    }
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t t = x.rows(), d = x.cols();
  if (count == 0 || start + count > d) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + std::to_string(d) + " columns");
  }
  std::vector<T> out(t * count);
  auto xv = x.values();
  for (std::size_t i = 0; i < t; ++i) {
    std::copy_n(xv.data() + i * d + start, count, out.data() + i * count);
  }
  return Tensor<T>::make_op("slice_cols", {t, count}, std::move(out), {x},
                            [x, t, d, start, count](TensorNode<T>& self) mutable {
                              auto g = x.grad_buffer();
                              for (std::size_t i = 0; i < t; ++i) {
                                for (std::size_t j = 0; j < count; ++j) {
                                  g[i * d + start + j] += self.grad[i * count + j];
                                }
                              }
                            });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t t = parts.front().rows();
  std::size_t d = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != t) throw DimensionError("concat_cols: row counts differ");
    d += p.cols();
  }
  std::vector<T> out(t * d);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    auto pv = p.values();
    for (std::size_t i = 0; i < t; ++i) std::copy_n(pv.data() + i * c, c, out.data() + i * d + offset);
    offset += c;
  }
  return Tensor<T>::make_op("concat_cols", {t, d}, std::move(out), parts,
                            [parts, t, d](TensorNode<T>& self) mutable {
                              std::size_t offset = 0;
                              for (auto& p : parts) {
                                const std::size_t c = p.cols();
                                if (p.requires_grad()) {
                                  auto g = p.grad_buffer();
                                  for (std::size_t i = 0; i < t; ++i) {
                                    for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * d + offset + j];
                                  }
                                }
                                offset += c;
                              }
                            });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> index) {
  require_matrix(x, "gather_rows");
  const std::size_t n = x.rows(), d = x.cols();
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<T> out(idx.size() * d);
  auto xv = x.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) throw DimensionError("gather_rows: row " + std::to_string(idx[i]) + " out of range");
    std::copy_n(xv.data() + idx[i] * d, d, out.data() + i * d);
  }
  const std::size_t m = idx.size();
  return Tensor<T>::make_op("gather_rows", {m, d}, std::move(out), {x},
                            [x, idx = std::move(idx), d](TensorNode<T>& self) mutable {
                              auto g = x.grad_buffer();
                              for (std::size_t i = 0; i < idx.size(); ++i) {
                                for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
                              }
                            });
}

template <typename T>
Tensor<T> replace_rows(const Tensor<T>& x, const std::vector<bool>& replace, const Tensor<T>& row) {
  require_matrix(x, "replace_rows");
  const std::size_t t = x.rows(), d = x.cols();
  if (replace.size() != t) throw DimensionError("replace_rows: mask length differs from row count");
  if (row.size() != d) throw DimensionError("replace_rows: replacement row has wrong length");
  std::vector<T> out(x.values().begin(), x.values().end());
  auto rv = row.values();
  for (std::size_t i = 0; i < t; ++i) {
    if (replace[i]) std::copy_n(rv.data(), d, out.data() + i * d);
  }
  return Tensor<T>::make_op("replace_rows", x.shape(), std::move(out), {x, row},
                            [x, row, replace, t, d](TensorNode<T>& self) mutable {
                              for (std::size_t i = 0; i < t; ++i) {
                                const Tensor<T>& target = replace[i] ? row : x;
                                if (!target.requires_grad()) continue;
                                auto g = target.grad_buffer();
                                const std::size_t base = replace[i] ? 0 : i * d;
                                for (std::size_t j = 0; j < d; ++j) g[base + j] += self.grad[i * d + j];
                              }
                            });
}

template <typename T>
Tensor<T> gather_in_rows(const Tensor<T>& m, std::span<const std::size_t> index, std::size_t out_cols) {
  require_matrix(m, "gather_in_rows");
  const std::size_t t = m.rows(), c = m.cols();
  if (out_cols == 0 || index.size() != t * out_cols) {
    throw DimensionError("gather_in_rows: index has " + std::to_string(index.size()) + " entries, expected " +
                         std::to_string(t * out_cols));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t k : idx) {
    if (k >= c) throw ContractError("gather_in_rows: column " + std::to_string(k) + " outside table");
  }
  std::vector<T> out(t * out_cols);
  auto mv = m.values();
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < out_cols; ++j) out[i * out_cols + j] = mv[i * c + idx[i * out_cols + j]];
  }
  return Tensor<T>::make_op("gather_in_rows", {t, out_cols}, std::move(out), {m},
                            [m, idx = std::move(idx), t, c, out_cols](TensorNode<T>& self) mutable {
                              auto g = m.grad_buffer();
                              for (std::size_t i = 0; i < t; ++i) {
                                for (std::size_t j = 0; j < out_cols; ++j) {
                                  g[i * c + idx[i * out_cols + j]] += self.grad[i * out_cols + j];
                                }
                              }
                            });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.values()) total += v;
  return Tensor<T>::make_op("sum", {1}, {total}, {x}, [x](TensorNode<T>& self) mutable {
    for (T& g : x.grad_buffer()) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.size()));
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "mse");
  const auto diff = sub(pred, target);
  return mean(mul(diff, diff));
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_matrix(logits, "softmax_cross_entropy");
  require_finite(logits, "softmax_cross_entropy");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) throw DimensionError("softmax_cross_entropy: label count differs from rows");
  auto probs = std::make_shared<std::vector<T>>(n * c);
  std::vector<int> lab(labels.begin(), labels.end());
  auto lv = logits.values();
  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= c) {
      throw DimensionError("softmax_cross_entropy: label out of range");
    }
    const T* row = lv.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T total = 0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const T log_total = std::log(total);
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - mx - log_total);
    loss -= row[lab[i]] - mx - log_total;
  }
  loss /= T(n);
  return Tensor<T>::make_op("softmax_cross_entropy", {1}, {loss}, {logits},
                            [logits, probs, lab = std::move(lab), n, c](TensorNode<T>& self) mutable {
                              auto g = logits.grad_buffer();
                              const T s = self.grad[0] / T(n);
                              for (std::size_t i = 0; i < n; ++i) {
                                for (std::size_t j = 0; j < c; ++j) {
                                  const T target = static_cast<std::size_t>(lab[i]) == j ? T(1) : T(0);
                                  g[i * c + j] += s * ((*probs)[i * c + j] - target);
                                }
                              }
                            });
}

#define LOMAR_INSTANTIATE_OPS(T)                                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                                      \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);             \
  template Tensor<T> gelu(const Tensor<T>&);                                                          \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                      \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);                     \
  template Tensor<T> replace_rows(const Tensor<T>&, const std::vector<bool>&, const Tensor<T>&);      \
  template Tensor<T> gather_in_rows(const Tensor<T>&, std::span<const std::size_t>, std::size_t);     \
  template Tensor<T> sum(const Tensor<T>&);                                                           \
  template Tensor<T> mean(const Tensor<T>&);                                                          \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);

LOMAR_INSTANTIATE_OPS(float)
LOMAR_INSTANTIATE_OPS(double)

#undef LOMAR_INSTANTIATE_OPS

}  // namespace lomar::ops
