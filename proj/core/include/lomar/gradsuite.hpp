#pragma once

#include <cstdint>
#include <vector>

#include "lomar/gradcheck.hpp"

namespace lomar {

/// Central-difference checks at 64 bits for every differentiable operation
/// (tolerance 1e-6, tensors of at most 64 elements, step 1e-5) followed by the whole
/// embed → window → encoder → head → masked MSE pipeline (tolerance 1e-3).
std::vector<GradCheckReport> gradient_suite(std::uint64_t seed = 0);

/// "op,max_relative_error,tolerance,passed"
std::string gradcheck_csv(const std::vector<GradCheckReport>& reports);

}  // namespace lomar
