#pragma once

#include <cmath>
#include <vector>

#include "lomar/encoder.hpp"

namespace lomar::testing {

/// Scalar double-loop reference for one attention layer, computed directly
/// from the raw weight values (no tensor ops, no autograd).
template <typename T>
std::vector<double> naive_attention(const Tensor<T>& x, const BlockWeights<T>& b, const RpeTable<T>& table) {
  const std::size_t t = x.rows(), d = x.cols(), heads = table.heads.size(), hd = d / heads, k = table.k;
  auto linear = [&](const Tensor<T>& w, const Tensor<T>& bias) {
    std::vector<double> out(t * d);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t o = 0; o < d; ++o) {
        double s = bias.at(o);
        for (std::size_t c = 0; c < d; ++c) s += double(x.at(i, c)) * double(w.at(c, o));
        out[i * d + o] = s;
      }
    return out;
  };
  const auto q = linear(b.wq, b.bq), kk = linear(b.wk, b.bk), v = linear(b.wv, b.bv);
  std::vector<double> merged(t * d, 0.0);
  const long side = 2 * long(k) - 1;
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> logits(t);
      for (std::size_t j = 0; j < t; ++j) {
        const long dr = long(j / k) - long(i / k), dc = long(j % k) - long(i % k);
        const std::size_t r = std::size_t((dr + long(k) - 1) * side + (dc + long(k) - 1));
        double content = 0, rel = 0;
        for (std::size_t c = 0; c < hd; ++c) {
          content += q[i * d + h * hd + c] * kk[j * d + h * hd + c];
          rel += q[i * d + h * hd + c] * double(table.heads[h].at(r, c));
        }
        logits[j] = (content + rel) / std::sqrt(double(hd));
      }
      double mx = logits[0];
      for (double l : logits) mx = std::max(mx, l);
      double z = 0;
      for (double& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t c = 0; c < hd; ++c) merged[i * d + h * hd + c] += logits[j] / z * v[j * d + h * hd + c];
    }
  }
  std::vector<double> out(t * d);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t o = 0; o < d; ++o) {
      double s = b.bo.at(o);
      for (std::size_t c = 0; c < d; ++c) s += merged[i * d + c] * double(b.wo.at(c, o));
      out[i * d + o] = s;
    }
  return out;
}

}  // namespace lomar::testing
