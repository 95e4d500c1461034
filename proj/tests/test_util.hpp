#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "lomar/tensor.hpp"

namespace lomar::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<T> values(shape_size(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(values), requires_grad);
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace lomar::testing

#include "lomar/params.hpp"

namespace lomar::testing {

/// Overwrites every parameter with N(0, scale²) draws so that gradient
/// checks exercise non-trivial weights (init leaves RPE and biases at zero).
template <typename T>
void randomize(ParamList<T>& params, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& p : params) {
    for (auto& v : p.tensor->mutable_values()) v = static_cast<T>(dist(rng));
  }
}

template <typename T>
std::vector<Tensor<T>> tensors_of(const ParamList<T>& params) {
  std::vector<Tensor<T>> out;
  for (const auto& p : params) out.push_back(*p.tensor);
  return out;
}

}  // namespace lomar::testing
