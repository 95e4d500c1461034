#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lomar/tensor.hpp"

namespace lomar {

struct GradCheckReport {
  std::string op_name;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  /// {parameter index, coordinate...} of the worst mismatch.
  std::vector<std::size_t> worst_coordinate;
};

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-6;
  /// Denominator floor for the relative error, so that coordinates whose
  /// true gradient is ~0 are judged on absolute error instead.
  double scale_floor = 1e-3;
};

/// Scalar loss rebuilt from the current parameter values on every call.
using LossFn = std::function<Tensor<double>()>;

/// Compares the analytic gradients of `loss` w.r.t. `params` against central
/// differences (f(θ+δ) − f(θ−δ)) / 2δ over every coordinate.
///
/// Existing gradients on `params` are reset. Throws ContractError if `loss`
/// does not return bit-identical values for identical parameters.
GradCheckReport finite_diff_check(const std::string& op_name, const LossFn& loss,
                                  std::span<Tensor<double>> params, const GradCheckOptions& options = {});

/// Same comparison against caller-supplied analytic gradients (one buffer
/// per parameter). Useful for negative controls.
GradCheckReport finite_diff_compare(const std::string& op_name, const LossFn& loss,
                                    std::span<Tensor<double>> params,
                                    const std::vector<std::vector<double>>& analytic,
                                    const GradCheckOptions& options = {});

}  // namespace lomar
