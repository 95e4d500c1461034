#pragma once

#include <string>
#include <vector>

#include "lomar/tensor.hpp"

namespace lomar {

/// Named handle to a trainable tensor. `decay` marks weight matrices that
/// receive decoupled weight decay (not biases, norms, RPE or mask tokens).
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
  bool decay = false;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

}  // namespace lomar
