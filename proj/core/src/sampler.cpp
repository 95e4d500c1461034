#include "lomar/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "lomar/error.hpp"
#include "lomar/ops.hpp"

namespace lomar {

std::vector<bool> MaskPlan::mask_vector() const {
  std::vector<bool> v(window_len(), false);
  for (std::size_t j : masked) v[j] = true;
  return v;
}

bool MaskPlan::is_masked(std::size_t j) const { return std::binary_search(masked.begin(), masked.end(), j); }

std::size_t default_views(std::size_t k) {
  switch (k) {
    case 5: return 8;
    case 7: return 4;
    case 9: return 3;
    case 11: return 2;
    case 14: return 1;
    default: {
      if (k == 0) throw ParameterError("window side must be positive");
      const double v = std::round(196.0 / static_cast<double>(k * k));
      return std::max<std::size_t>(1, static_cast<std::size_t>(v));
    }
  }
}

std::size_t masked_count(std::size_t k, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ParameterError("mask ratio must lie in [0, 1]");
  // The small slack keeps decimal ratios such as 0.3 · 100 from landing
  // one below the intended integer.
  const double exact = ratio * static_cast<double>(k * k);
  return std::min(k * k, static_cast<std::size_t>(std::floor(exact + 1e-9)));
}

void check_window(const WindowSpec& spec, std::size_t grid_h, std::size_t grid_w) {
  if (spec.k == 0 || spec.k > grid_h || spec.k > grid_w || spec.top > grid_h - spec.k ||
      spec.left > grid_w - spec.k) {
    throw DimensionError("window (" + std::to_string(spec.top) + "," + std::to_string(spec.left) + ") k=" +
                         std::to_string(spec.k) + " does not fit grid " + std::to_string(grid_h) + "x" +
                         std::to_string(grid_w));
  }
}

std::vector<WindowSpec> sample_windows(std::size_t grid_h, std::size_t grid_w, std::size_t k, std::size_t n,
                                       Rng& rng) {
  if (k == 0 || k > std::min(grid_h, grid_w)) {
    throw DimensionError("window side " + std::to_string(k) + " larger than grid " + std::to_string(grid_h) + "x" +
                         std::to_string(grid_w));
  }
  if (n == 0) throw ParameterError("at least one window per image");
  std::uniform_int_distribution<std::size_t> top(0, grid_h - k), left(0, grid_w - k);
  std::vector<WindowSpec> specs;
  specs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = top(rng);
    specs.push_back({t, left(rng), k});
  }
  return specs;
}

MaskPlan make_mask_plan(std::size_t k, double ratio, Rng& rng) {
  const std::size_t m = masked_count(k, ratio);
  std::vector<std::size_t> idx(k * k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, idx.size() - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return {k, ratio, std::move(idx)};
}

std::size_t window_to_global(const WindowSpec& spec, std::size_t j, std::size_t grid_w) {
  return (spec.top + j / spec.k) * grid_w + (spec.left + j % spec.k);
}

std::size_t global_to_window(const WindowSpec& spec, std::size_t index, std::size_t grid_w) {
  const std::size_t row = index / grid_w, col = index % grid_w;
  if (row < spec.top || row >= spec.top + spec.k || col < spec.left || col >= spec.left + spec.k) {
    throw DimensionError("patch " + std::to_string(index) + " is outside the window");
  }
  return (row - spec.top) * spec.k + (col - spec.left);
}

std::vector<std::size_t> window_indices(const WindowSpec& spec, std::size_t grid_w) {
  std::vector<std::size_t> out(spec.k * spec.k);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = window_to_global(spec, j, grid_w);
  return out;
}

template <typename T>
WindowInput<T> gather_window(const Tensor<T>& embeddings, const PatchGrid& grid, const WindowSpec& spec,
                             const MaskPlan& plan, const Tensor<T>& masked_row) {
  check_window(spec, grid.grid_h, grid.grid_w);
  if (plan.k != spec.k) throw DimensionError("mask plan and window disagree on k");
  if (embeddings.rank() != 2 || embeddings.rows() != grid.num_patches()) {
    throw DimensionError("embeddings must have one row per patch");
  }
  WindowInput<T> out;
  out.patch_index = window_indices(spec, grid.grid_w);
  auto tokens = ops::gather_rows<T>(embeddings, out.patch_index);
  out.tokens = plan.masked.empty() ? tokens : ops::replace_rows(tokens, plan.mask_vector(), masked_row);

  const std::size_t dim = grid.patch_dim;
  std::vector<T> targets(out.patch_index.size() * dim);
  for (std::size_t j = 0; j < out.patch_index.size(); ++j) {
    const auto row = grid.target(out.patch_index[j]);
    std::copy(row.begin(), row.end(), targets.begin() + static_cast<std::ptrdiff_t>(j * dim));
  }
  out.targets = Tensor<T>::from({out.patch_index.size(), dim}, std::move(targets));
  return out;
}

std::string format_mask_plan(const MaskPlan& plan) {
  char ratio[32];
  std::snprintf(ratio, sizeof ratio, "%.17g", plan.ratio);
  std::ostringstream os;
  os << plan.k << ' ' << ratio;
  for (std::size_t j : plan.masked) os << ' ' << j;
  return os.str();
}

MaskPlan parse_mask_plan(const std::string& line) {
  std::istringstream is(line);
  MaskPlan plan;
  if (!(is >> plan.k >> plan.ratio) || plan.k == 0) throw ParameterError("malformed mask plan: " + line);
  std::size_t j;
  while (is >> j) {
    if (j >= plan.window_len()) throw ParameterError("mask index out of range: " + line);
    plan.masked.push_back(j);
  }
  if (!is.eof()) throw ParameterError("malformed mask plan: " + line);
  if (!std::is_sorted(plan.masked.begin(), plan.masked.end()) ||
      std::adjacent_find(plan.masked.begin(), plan.masked.end()) != plan.masked.end()) {
    throw ParameterError("mask indices must be sorted and unique: " + line);
  }
  return plan;
}

template WindowInput<float> gather_window<float>(const Tensor<float>&, const PatchGrid&, const WindowSpec&,
                                                 const MaskPlan&, const Tensor<float>&);
template WindowInput<double> gather_window<double>(const Tensor<double>&, const PatchGrid&, const WindowSpec&,
                                                   const MaskPlan&, const Tensor<double>&);

}  // namespace lomar
