#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lomar/image.hpp"
#include "lomar/model.hpp"
#include "lomar/patchify.hpp"
#include "lomar/sampler.hpp"

namespace lomar {

/// Attention cost in unit operations for an h×w patch grid.
struct CostModel {
  std::size_t h = 0, w = 0, n = 0, m = 0;
  double local_cost = 0.0;   // hw + n·m⁴
  double global_cost = 0.0;  // (hw)²
};

/// Throws ParameterError unless all arguments are positive and m ≤ min(h, w).
CostModel attention_cost(std::size_t h, std::size_t w, std::size_t n, std::size_t m);

struct BenchConfig {
  std::vector<std::size_t> grids{8, 14, 28};
  std::vector<std::size_t> views{1, 2, 3, 4, 5, 6, 7, 8};
  std::size_t m = 7;
  std::size_t n = 4;
  std::size_t embed_dim = 64;
  std::size_t num_heads = 4;
  std::size_t repetitions = 5;
  /// Each repetition repeats the pass until it lasts at least this long and
  /// reports seconds per pass.
  double min_sample_s = 0.02;
  /// Run repetitions on separate threads, each with its own state.
  bool parallel = false;
  std::uint64_t seed = 0;
};

struct ScalingRow {
  std::string config;
  std::size_t grid = 0;
  double analytic_local = 0.0;
  double analytic_global = 0.0;
  double measured_local_s = 0.0;
  double measured_global_s = 0.0;
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  /// Slope of log(global time) against log(patch count).
  double global_exponent = 0.0;
  /// Slope of log(local time) against log(patch count) at fixed n, m.
  double local_exponent = 0.0;
  /// Local time against window count n at fixed m.
  std::vector<std::size_t> views;
  std::vector<double> local_vs_views_s;
  double local_linear_r2 = 0.0;
  double local_linear_slope = 0.0;
};

/// Smallest reliably measurable interval of the steady clock, in seconds.
double timer_resolution();

/// Median wall-clock seconds of forward+backward through one attention
/// layer: `windows` independent windows of side `side` (a side equal to the
/// grid side is global attention). Warm-up and calibration precede the
/// timed repetitions. Throws MeasurementError when the median is under 20
/// timer ticks.
double time_attention(std::size_t side, std::size_t windows, const BenchConfig& cfg);

/// time_attention for several window counts at once. Repetitions are
/// interleaved across the counts; returns one median per count.
std::vector<double> time_attention_sweep(std::size_t side, std::span<const std::size_t> windows,
                                         const BenchConfig& cfg);

ScalingReport run_scaling_bench(const BenchConfig& cfg);

/// "config,analytic_local,analytic_global,measured_local_s,measured_global_s"
std::string scaling_csv(const ScalingReport& report);
/// "n,measured_local_s"
std::string views_csv(const ScalingReport& report);

/// Least-squares slope of y on x.
double fit_slope(std::span<const double> x, std::span<const double> y);
/// Coefficient of determination of the least-squares line.
double linear_r2(std::span<const double> x, std::span<const double> y);

enum class DistanceMetric { chebyshev, euclidean };

struct LocalityStat {
  std::size_t k = 0;
  std::size_t target = 0;  // window-local index
  GridCoord target_cell;   // window-local (row, col)
  std::vector<double> mass;         // k² attention weights from the target row
  double mean_distance = 0.0;       // Σ mass · distance
  std::vector<double> mass_within;  // mass_within[r] = mass at distance ≤ r, r = 0..k−1
};

/// Profile of one attention row over a k×k window.
LocalityStat locality_profile(std::span<const double> row, std::size_t k, std::size_t target,
                              DistanceMetric metric = DistanceMetric::chebyshev);

/// Profile of uniform attention (the no-locality baseline).
LocalityStat uniform_locality(std::size_t k, std::size_t target, DistanceMetric metric = DistanceMetric::chebyshev);

/// Head-averaged post-softmax attention of a masked target at `layer`.
/// Throws ContractError unless the target is masked and the layer exists.
template <typename T>
LocalityStat attention_locality(const Model<T>& model, const PatchGrid& grid, const WindowSpec& window,
                                const MaskPlan& plan, std::size_t target, std::size_t layer,
                                DistanceMetric metric = DistanceMetric::chebyshev);

/// "radius,mass_within,uniform_within"
std::string locality_csv(const LocalityStat& stat, const LocalityStat& uniform);

struct RenderOptions {
  /// Show the round-tripped original instead of predictions on visible patches.
  bool copy_visible = false;
  std::size_t gap = 4;
};

/// Four panels left to right: original image, window crop, window with
/// masked patches black, denormalized reconstruction. Panels are top
/// aligned on a white canvas separated by `gap` pixels.
template <typename T>
Image render_reconstruction(const Model<T>& model, const Image& image, const PatchGrid& grid,
                            const WindowSpec& window, const MaskPlan& plan, const RenderOptions& options = {});

/// Renders and writes a PNG. Throws IoError when the path is unwritable.
template <typename T>
Image render_reconstruction(const Model<T>& model, const Image& image, const PatchGrid& grid,
                            const WindowSpec& window, const MaskPlan& plan, const std::filesystem::path& out,
                            const RenderOptions& options = {});

}  // namespace lomar
