#include "lomar/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lomar/error.hpp"

namespace lomar {

namespace {

std::vector<std::size_t> unravel(std::size_t flat, const Shape& shape) {
  std::vector<std::size_t> coord(shape.size());
  for (std::size_t i = shape.size(); i-- > 0;) {
    coord[i] = flat % shape[i];
    flat /= shape[i];
  }
  return coord;
}

}  // namespace

GradCheckReport finite_diff_check(const std::string& op_name, const LossFn& loss,
                                  std::span<Tensor<double>> params, const GradCheckOptions& options) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  backward(loss());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());
  return finite_diff_compare(op_name, loss, params, analytic, options);
}

GradCheckReport finite_diff_compare(const std::string& op_name, const LossFn& loss,
                                    std::span<Tensor<double>> params,
                                    const std::vector<std::vector<double>>& analytic,
                                    const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractError("finite_diff_check: step must be positive");
  if (analytic.size() != params.size()) throw DimensionError("finite_diff_check: one gradient per parameter");

  const double base = loss().item();
  if (loss().item() != base) {
    throw ContractError("finite_diff_check: loss is not deterministic (unseeded randomness?)");
  }

  GradCheckReport report;
  report.op_name = op_name;
  report.tolerance = options.tolerance;
  double worst = -1.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_values();
    if (analytic[pi].size() != values.size()) throw DimensionError("finite_diff_check: gradient size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double plus = loss().item();
      values[i] = saved - options.step;
      const double minus = loss().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.scale_floor});
      const double err = std::abs(a - numeric) / denom;
      if (err > worst) {
        worst = err;
        report.worst_coordinate = unravel(i, params[pi].shape());
        report.worst_coordinate.insert(report.worst_coordinate.begin(), pi);
      }
    }
  }
  report.max_relative_error = std::max(worst, 0.0);
  report.passed = report.max_relative_error <= report.tolerance;
  return report;
}

}  // namespace lomar
