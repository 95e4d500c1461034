#include "lomar/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "lomar/error.hpp"
#include "lomar/ops.hpp"

namespace lomar {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct AttentionFixture {
  BlockWeights<float> block;
  RpeTable<float> table;
  std::vector<Tensor<float>> inputs;

  AttentionFixture(std::size_t side, std::size_t windows, const BenchConfig& cfg, std::uint64_t seed) {
    EncoderConfig ec{.embed_dim = cfg.embed_dim, .num_heads = cfg.num_heads, .num_layers = 1, .k = side};
    ec.validate();
    Rng rng(seed);
    block = BlockWeights<float>::init(ec, rng);
    table = RpeTable<float>::zeros(side, cfg.num_heads, ec.head_dim());
    for (auto& h : table.heads) h = trunc_normal<float>(h.shape(), 0.02, rng);
    for (std::size_t w = 0; w < windows; ++w) inputs.push_back(trunc_normal<float>({side * side, cfg.embed_dim}, 1.0, rng));
  }

  void run() {
    for (const auto& x : inputs) backward(ops::sum(attention(x, block, table)));
  }
};

// Seconds per pass, repeating the pass `iters` times.
double time_passes(AttentionFixture& f, std::size_t iters) {
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < iters; ++i) f.run();
  return std::chrono::duration<double>(Clock::now() - t0).count() / static_cast<double>(iters);
}

// Passes per sample so that one sample lasts at least `min_s`; the
// calibration runs double as warm-up.
std::size_t calibrate(AttentionFixture& f, double min_s) {
  std::size_t iters = 1;
  for (;;) {
    const double per = time_passes(f, iters);
    if (per * static_cast<double>(iters) >= min_s || iters >= (1u << 20)) return iters;
    iters = std::max<std::size_t>(iters * 2, static_cast<std::size_t>(std::ceil(min_s / std::max(per, 1e-9))));
  }
}

}  // namespace

CostModel attention_cost(std::size_t h, std::size_t w, std::size_t n, std::size_t m) {
  if (h == 0 || w == 0 || n == 0 || m == 0) throw ParameterError("attention_cost: all sizes must be positive");
  if (m > std::min(h, w)) throw ParameterError("attention_cost: window side exceeds the grid");
  const double hw = static_cast<double>(h) * static_cast<double>(w);
  const double m4 = std::pow(static_cast<double>(m), 4);
  return {h, w, n, m, hw + static_cast<double>(n) * m4, hw * hw};
}

double timer_resolution() {
  double best = std::chrono::duration<double>(Clock::duration(1)).count();
  double observed = 1.0;
  for (int i = 0; i < 64; ++i) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    observed = std::min(observed, std::chrono::duration<double>(b - a).count());
  }
  return std::max(best, observed);
}

static void check_resolution(double med) {
  const double tick = timer_resolution();
  if (!(med >= 20.0 * tick)) {
    throw MeasurementError("median " + std::to_string(med) + " s is under 20 timer ticks of " +
                           std::to_string(tick) + " s");
  }
}

double time_attention(std::size_t side, std::size_t windows, const BenchConfig& cfg) {
  if (cfg.repetitions == 0) throw ParameterError("benchmark needs at least one repetition");
  if (!cfg.parallel || cfg.repetitions == 1) return time_attention_sweep(side, std::span(&windows, 1), cfg).front();
  std::vector<double> samples(cfg.repetitions);
  const std::uint64_t seed = stream_seed(cfg.seed, side, windows);
  std::vector<std::thread> workers;
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    workers.emplace_back([&, r] {
      AttentionFixture f(side, windows, cfg, seed);
      samples[r] = time_passes(f, calibrate(f, cfg.min_sample_s));
    });
  }
  for (auto& t : workers) t.join();
  const double med = median(samples);
  check_resolution(med);
  return med;
}

std::vector<double> time_attention_sweep(std::size_t side, std::span<const std::size_t> windows,
                                         const BenchConfig& cfg) {
  if (cfg.repetitions == 0) throw ParameterError("benchmark needs at least one repetition");
  std::vector<AttentionFixture> fixtures;
  std::vector<std::size_t> iters;
  for (std::size_t n : windows) {
    fixtures.emplace_back(side, n, cfg, stream_seed(cfg.seed, side, n));
    iters.push_back(calibrate(fixtures.back(), cfg.min_sample_s));
  }
  // Repetitions cycle through every configuration so that a transient
  // slowdown costs one sample per configuration instead of a whole point.
  std::vector<std::vector<double>> samples(windows.size(), std::vector<double>(cfg.repetitions));
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    for (std::size_t i = 0; i < fixtures.size(); ++i) samples[i][r] = time_passes(fixtures[i], iters[i]);
  }
  std::vector<double> out;
  for (auto& s : samples) {
    out.push_back(median(std::move(s)));
    check_resolution(out.back());
  }
  return out;
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ParameterError("fit needs at least two paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ParameterError("fit needs distinct x values");
  return sxy / sxx;
}

double linear_r2(std::span<const double> x, std::span<const double> y) {
  const double slope = fit_slope(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fit = my + slope * (x[i] - mx);
    ss_res += (y[i] - fit) * (y[i] - fit);
    ss_tot += (y[i] - my) * (y[i] - my);
  }
  return ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
}

ScalingReport run_scaling_bench(const BenchConfig& cfg) {
  if (cfg.grids.size() < 2) throw ParameterError("scaling bench needs at least two grid sizes");
  ScalingReport report;
  std::vector<double> log_t, log_global, log_local;
  for (std::size_t g : cfg.grids) {
    const auto cost = attention_cost(g, g, cfg.n, cfg.m);
    ScalingRow row;
    row.grid = g;
    row.config = std::to_string(g) + "x" + std::to_string(g) + "_n" + std::to_string(cfg.n) + "_m" +
                 std::to_string(cfg.m);
    row.analytic_local = cost.local_cost;
    row.analytic_global = cost.global_cost;
    row.measured_local_s = time_attention(cfg.m, cfg.n, cfg);
    row.measured_global_s = time_attention(g, 1, cfg);
    log_t.push_back(std::log(static_cast<double>(g * g)));
    log_global.push_back(std::log(row.measured_global_s));
    log_local.push_back(std::log(row.measured_local_s));
    report.rows.push_back(row);
  }
  report.global_exponent = fit_slope(log_t, log_global);
  report.local_exponent = fit_slope(log_t, log_local);

  std::vector<double> xs;
  report.views = cfg.views;
  report.local_vs_views_s = cfg.parallel ? std::vector<double>{} : time_attention_sweep(cfg.m, cfg.views, cfg);
  for (std::size_t n : cfg.views) {
    if (cfg.parallel) report.local_vs_views_s.push_back(time_attention(cfg.m, n, cfg));
    xs.push_back(static_cast<double>(n));
  }
  if (xs.size() >= 2) {
    report.local_linear_slope = fit_slope(xs, report.local_vs_views_s);
    report.local_linear_r2 = linear_r2(xs, report.local_vs_views_s);
  }
  return report;
}

std::string scaling_csv(const ScalingReport& report) {
  std::string out = "config,analytic_local,analytic_global,measured_local_s,measured_global_s\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.9g,%.9g\n", r.config.c_str(), r.analytic_local,
                  r.analytic_global, r.measured_local_s, r.measured_global_s);
    out += buf;
  }
  return out;
}

std::string views_csv(const ScalingReport& report) {
  std::string out = "n,measured_local_s\n";
  char buf[64];
  for (std::size_t i = 0; i < report.views.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", report.views[i], report.local_vs_views_s[i]);
    out += buf;
  }
  return out;
}

LocalityStat locality_profile(std::span<const double> row, std::size_t k, std::size_t target, DistanceMetric metric) {
  if (k == 0 || row.size() != k * k) throw DimensionError("locality row must have k² entries");
  if (target >= k * k) throw ContractError("locality target outside the window");
  LocalityStat s;
  s.k = k;
  s.target = target;
  s.target_cell = {target / k, target % k};
  s.mass.assign(row.begin(), row.end());
  s.mass_within.assign(k, 0.0);
  for (std::size_t j = 0; j < k * k; ++j) {
    const double dr = std::abs(double(j / k) - double(s.target_cell.row));
    const double dc = std::abs(double(j % k) - double(s.target_cell.col));
    const double dist = metric == DistanceMetric::chebyshev ? std::max(dr, dc) : std::hypot(dr, dc);
    s.mean_distance += row[j] * dist;
    for (std::size_t r = 0; r < k; ++r) {
      if (dist <= static_cast<double>(r) + 1e-12) s.mass_within[r] += row[j];
    }
  }
  return s;
}

LocalityStat uniform_locality(std::size_t k, std::size_t target, DistanceMetric metric) {
  const std::vector<double> row(k * k, 1.0 / static_cast<double>(k * k));
  return locality_profile(row, k, target, metric);
}

template <typename T>
LocalityStat attention_locality(const Model<T>& model, const PatchGrid& grid, const WindowSpec& window,
                                const MaskPlan& plan, std::size_t target, std::size_t layer,
                                DistanceMetric metric) {
  if (!plan.is_masked(target)) throw ContractError("locality target " + std::to_string(target) + " is not masked");
  if (layer >= model.config.encoder.num_layers) {
    throw ContractError("layer " + std::to_string(layer) + " out of range for " +
                        std::to_string(model.config.encoder.num_layers) + " layers");
  }
  AttentionTrace trace;
  window_forward(model, grid, window, plan, &trace);
  const std::size_t t = window.k * window.k;
  const auto& heads = trace.probs.at(layer);
  std::vector<double> row(t, 0.0);
  for (const auto& p : heads) {
    for (std::size_t j = 0; j < t; ++j) row[j] += p[target * t + j] / static_cast<double>(heads.size());
  }
  return locality_profile(row, window.k, target, metric);
}

std::string locality_csv(const LocalityStat& stat, const LocalityStat& uniform) {
  std::string out = "radius,mass_within,uniform_within\n";
  char buf[96];
  for (std::size_t r = 0; r < stat.mass_within.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", r, stat.mass_within[r], uniform.mass_within.at(r));
    out += buf;
  }
  return out;
}

template <typename T>
Image render_reconstruction(const Model<T>& model, const Image& image, const PatchGrid& grid,
                            const WindowSpec& window, const MaskPlan& plan, const RenderOptions& options) {
  validate_image(image);
  const std::size_t p = grid.patch_size, ch = grid.channels, side = window.k * p;
  if (image.height != grid.grid_h * p || image.width != grid.grid_w * p || image.channels != ch) {
    throw DimensionError("render: image and patch grid disagree");
  }
  const auto pass = window_forward(model, grid, window, plan);

  const std::size_t gap = options.gap;
  Image canvas = Image::filled(std::max(image.height, side), image.width + 3 * side + 3 * gap, ch, 1.0f);
  auto put = [&](std::size_t x0, std::size_t y, std::size_t x, std::size_t c, double v) {
    canvas.at(y, x0 + x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
  };
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < ch; ++c) put(0, y, x, c, image.at(y, x, c));

  const std::size_t x_window = image.width + gap, x_masked = x_window + side + gap, x_recon = x_masked + side + gap;
  for (std::size_t j = 0; j < window.k * window.k; ++j) {
    const std::size_t idx = pass.patch_index[j];
    const auto original = grid.patch(idx);
    std::vector<double> shown;
    if (plan.is_masked(j) || !options.copy_visible) {
      std::vector<double> pred(grid.patch_dim);
      for (std::size_t i = 0; i < grid.patch_dim; ++i) pred[i] = static_cast<double>(pass.preds.at(j, i));
      shown = denormalize_patch(grid, idx, pred);
    } else {
      shown = denormalize_patch(grid, idx, grid.target(idx));
    }
    const std::size_t r0 = (j / window.k) * p, c0 = (j % window.k) * p;
    for (std::size_t py = 0; py < p; ++py) {
      for (std::size_t px = 0; px < p; ++px) {
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t i = (py * p + px) * ch + c;
          put(x_window, r0 + py, c0 + px, c, original[i]);
          put(x_masked, r0 + py, c0 + px, c, plan.is_masked(j) ? 0.0 : original[i]);
          put(x_recon, r0 + py, c0 + px, c, shown[i]);
        }
      }
    }
  }
  return canvas;
}

template <typename T>
Image render_reconstruction(const Model<T>& model, const Image& image, const PatchGrid& grid,
                            const WindowSpec& window, const MaskPlan& plan, const std::filesystem::path& out,
                            const RenderOptions& options) {
  Image canvas = render_reconstruction(model, image, grid, window, plan, options);
  save_png(canvas, out);
  return canvas;
}

#define LOMAR_INSTANTIATE_BENCH(T)                                                                             \
  template LocalityStat attention_locality<T>(const Model<T>&, const PatchGrid&, const WindowSpec&,            \
                                              const MaskPlan&, std::size_t, std::size_t, DistanceMetric);      \
  template Image render_reconstruction<T>(const Model<T>&, const Image&, const PatchGrid&, const WindowSpec&,  \
                                          const MaskPlan&, const RenderOptions&);                              \
  template Image render_reconstruction<T>(const Model<T>&, const Image&, const PatchGrid&, const WindowSpec&,  \
                                          const MaskPlan&, const std::filesystem::path&, const RenderOptions&);

LOMAR_INSTANTIATE_BENCH(float)
LOMAR_INSTANTIATE_BENCH(double)

#undef LOMAR_INSTANTIATE_BENCH

}  // namespace lomar
