// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all
// criteria pass. Artifacts (metrics, CSVs) go to the directory given as the
// first argument, default "acceptance_out".

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "attention_oracle.hpp"
#include "lomar/bench.hpp"
#include "lomar/config.hpp"
#include "lomar/corpus.hpp"
#include "lomar/error.hpp"
#include "lomar/gradsuite.hpp"
#include "lomar/probe.hpp"
#include "lomar/trainer.hpp"

#ifndef LOMAR_SOURCE_DIR
#define LOMAR_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace lomar;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_out = "acceptance_out";
int g_failed = 0;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void report(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("[%s] %2d %-24s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
  g_failed += !o.pass;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

TrainConfig preset() {
  std::ifstream in(fs::path(LOMAR_SOURCE_DIR) / "configs" / "synthetic.cfg");
  if (!in) throw IoError("configs/synthetic.cfg not found");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_config(text);
}

// Shared between criteria 6, 7 and 8.
struct Pretrained {
  TrainConfig cfg;
  std::unique_ptr<Trainer<float>> trainer;
  std::vector<StepMetrics> metrics;
};
Pretrained g_run;

Outcome gradient_criterion() {
  const auto t0 = Clock::now();
  const auto reports = gradient_suite();
  const double elapsed = seconds_since(t0);
  write_file(g_out / "gradcheck.csv", gradcheck_csv(reports));
  double worst_op = 0.0, pipeline = 0.0;
  bool ok = true;
  for (const auto& r : reports) {
    const double tol = r.op_name == "pipeline" ? 1e-3 : 1e-6;
    ok = ok && r.passed && r.max_relative_error <= tol;
    if (r.op_name == "pipeline") pipeline = r.max_relative_error;
    else worst_op = std::max(worst_op, r.max_relative_error);
  }
  ok = ok && elapsed < 120.0 && reports.back().op_name == "pipeline";
  return {ok, fmt("%zu checks, worst op rel err %.2e (<=1e-6), pipeline %.2e (<=1e-3), %.1fs (<120s)",
                  reports.size(), worst_op, pipeline, elapsed)};
}

Outcome mask_criterion() {
  Rng rng(0);
  const auto p9 = make_mask_plan(7, 0.9, rng);
  const auto p8 = make_mask_plan(7, 0.8, rng);
  const std::size_t v9 = 49 - masked_count(7, 0.9), v8 = 49 - masked_count(7, 0.8);
  const bool ok = v9 == 5 && v8 == 10 && p9.visible_count() == 5 && p8.visible_count() == 10;
  return {ok, fmt("k=7: ratio 0.9 -> %zu visible (want 5), ratio 0.8 -> %zu visible (want 10)", v9, v8)};
}

Outcome translation_criterion() {
  TrainConfig cfg = preset();
  std::mt19937_64 gen(42);
  std::size_t trials = 0, identical = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng init(trial);
    auto model = Model<float>::init(cfg.model_config(), init);
    auto params = model.params();
    std::normal_distribution<float> w(0.0f, 0.3f);
    for (auto& p : params)
      for (auto& v : p.tensor->mutable_values()) v = w(gen);

    const std::size_t k = cfg.sampler.k, ps = cfg.data.patch_size, grid = cfg.data.image_size / ps;
    std::uniform_int_distribution<std::size_t> pos(0, grid - k);
    WindowSpec a{pos(gen), pos(gen), k}, b{pos(gen), pos(gen), k};
    auto apart = [k](std::size_t u, std::size_t v) { return u + k <= v || v + k <= u; };
    while (!apart(a.top, b.top) && !apart(a.left, b.left)) a = {pos(gen), pos(gen), k}, b = {pos(gen), pos(gen), k};
    Image img = Image::filled(cfg.data.image_size, cfg.data.image_size, 3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : img.pixels) v = u(gen);
    const std::size_t side = k * ps;
    const Image block = crop(img, {a.top * ps, a.left * ps, side, side});
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x)
        for (std::size_t c = 0; c < 3; ++c) img.at(b.top * ps + y, b.left * ps + x, c) = block.at(y, x, c);
    if (crop(img, {b.top * ps, b.left * ps, side, side}).pixels != block.pixels) continue;

    const auto g = patchify(img, ps);
    Rng mrng(trial);
    const auto plan = make_mask_plan(k, cfg.sampler.mask_ratio, mrng);
    const auto pa = window_forward(model, g, a, plan);
    const auto pb = window_forward(model, g, b, plan);
    const auto la = pa.latents.values(), lb = pb.latents.values();
    ++trials;
    identical += std::equal(la.begin(), la.end(), lb.begin(), lb.end());
  }
  return {trials == 20 && identical == trials,
          fmt("%zu/%zu disjoint window pairs with equal content give bit-identical outputs", identical, trials)};
}

Outcome oracle_criterion() {
  const EncoderConfig cfg{.embed_dim = 64, .num_heads = 4, .num_layers = 1, .mlp_ratio = 4.0, .k = 7};
  std::mt19937_64 gen(7);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(trial);
    auto block = BlockWeights<double>::init(cfg, rng);
    auto table = RpeTable<double>::zeros(7, 4, 16);
    for (auto* t : {&block.wq, &block.wk, &block.wv, &block.wo, &block.bq, &block.bk, &block.bv, &block.bo})
      for (auto& v : t->mutable_values()) v = 0.2 * n(gen);
    for (auto& h : table.heads)
      for (auto& v : h.mutable_values()) v = 0.5 * n(gen);
    std::vector<double> xs(49 * 64);
    for (auto& v : xs) v = n(gen);
    const auto x = Tensor<double>::from({49, 64}, xs);
    const auto prod = attention(x, block, table);
    const auto ref = lomar::testing::naive_attention(x, block, table);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(prod.at(i) - ref[i]));
  }
  return {worst <= 1e-6, fmt("100 trials of 49 tokens, max abs diff %.2e (<=1e-6)", worst)};
}

Outcome complexity_criterion() {
  // (a) analytic: local cost minus hw is exactly n times the per-window term.
  bool linear = true;
  for (std::size_t g : {8u, 14u, 28u})
    for (std::size_t n = 1; n <= 8; ++n) {
      const auto c = attention_cost(g, g, n, 7);
      linear = linear && c.local_cost == double(g * g) + double(n) * 2401.0;
    }
  // (b) measured.
  const auto t0 = Clock::now();
  BenchConfig bc;
  const auto rep = run_scaling_bench(bc);
  const double elapsed = seconds_since(t0);
  write_file(g_out / "scaling.csv", scaling_csv(rep));
  write_file(g_out / "views.csv", views_csv(rep));
  const auto& big = rep.rows.back();
  const bool faster = big.grid == 28 && big.measured_local_s < big.measured_global_s;
  const bool ok = linear && rep.global_exponent >= 1.6 && rep.global_exponent <= 2.4 && rep.local_linear_r2 > 0.95 &&
                  faster && elapsed < 600.0;
  return {ok, fmt("analytic linear %s; global exponent %.3f in [1.6,2.4]; local vs n R^2 %.4f (>0.95); "
                  "28x28 local %.4fs vs global %.4fs; %.0fs (<600s)",
                  linear ? "exact" : "BROKEN", rep.global_exponent, rep.local_linear_r2, big.measured_local_s,
                  big.measured_global_s, elapsed)};
}

// Smoothed loss: mean over the last epoch of steps.
double smoothed_tail(const std::vector<StepMetrics>& m, std::size_t window) {
  window = std::min(window, m.size());
  double s = 0.0;
  for (std::size_t i = m.size() - window; i < m.size(); ++i) s += m[i].loss;
  return s / double(window);
}

Outcome training_criterion() {
  g_run.cfg = preset();
  const auto t0 = Clock::now();
  g_run.trainer = std::make_unique<Trainer<float>>(g_run.cfg, training_images(g_run.cfg));
  g_run.metrics = g_run.trainer->run(200);
  const double elapsed = seconds_since(t0);
  std::string csv;
  for (const auto& m : g_run.metrics) csv += format_metrics_line(m) + "\n";
  write_file(g_out / "metrics.csv", csv);
  const double first = g_run.metrics.front().loss;
  const double smooth = smoothed_tail(g_run.metrics, g_run.cfg.steps_per_epoch());
  const bool ok = g_run.metrics.size() == 200 && first >= 0.5 && first <= 1.5 && smooth < 0.5 * first &&
                  elapsed < 900.0;
  return {ok, fmt("step-1 loss %.4f in [0.5,1.5]; smoothed final %.4f = %.1f%% of step 1 (<50%%); %.0fs (<900s)",
                  first, smooth, 100.0 * smooth / first, elapsed)};
}

Outcome probe_criterion() {
  if (!g_run.trainer) return {false, "needs the pretraining run"};
  const auto& cfg = g_run.cfg;
  const auto set = probe_images(cfg);
  Rng init(purpose_seed(cfg.seed, Purpose::init));
  const auto baseline = Model<float>::init(cfg.model_config(), init);
  const auto threads = resolve_threads(cfg.threads);
  const auto rand = linear_probe(baseline, set, cfg.data, cfg.probe, cfg.seed, threads);
  const auto trained = linear_probe(g_run.trainer->model(), set, cfg.data, cfg.probe, cfg.seed, threads);
  const double gain = 100.0 * (trained.test_accuracy - rand.test_accuracy);
  return {gain >= 5.0, fmt("test accuracy pretrained %.1f%% vs random init %.1f%%: gain %+.1f points (>=5); "
                           "%zu classes, %zu test images",
                           100.0 * trained.test_accuracy, 100.0 * rand.test_accuracy, gain, trained.classes,
                           trained.test_count)};
}

Outcome locality_criterion() {
  if (!g_run.trainer) return {false, "needs the pretraining run"};
  const auto& cfg = g_run.cfg;
  const auto& model = g_run.trainer->model();
  const auto set = synthetic_corpus(50, cfg.data.image_size, cfg.data.num_classes,
                                    purpose_seed(cfg.seed, Purpose::probe) + 1);
  const std::size_t k = cfg.sampler.k, layer = cfg.encoder.num_layers - 1, r = std::min<std::size_t>(2, k - 1);
  std::size_t total = 0, above = 0, border = 0, above_first = 0;
  std::string csv = "image,target,row,col,mass_within_2,uniform_within_2\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto grid = patchify(set[i].image, cfg.data.patch_size, cfg.data.target_norm);
    Rng wrng(stream_seed(purpose_seed(cfg.seed, Purpose::windows), i));
    Rng mrng(stream_seed(purpose_seed(cfg.seed, Purpose::masks), i));
    const auto window = sample_windows(grid.grid_h, grid.grid_w, k, 1, wrng).front();
    const auto plan = make_mask_plan(k, cfg.sampler.mask_ratio, mrng);
    for (std::size_t t : plan.masked) {
      const auto stat = attention_locality(model, grid, window, plan, t, layer);
      const auto uni = uniform_locality(k, t);
      ++total;
      // Attention rows sum to one only to float precision; ties must not count.
      above += stat.mass_within[r] > uni.mass_within[r] + 1e-5;
      if (layer > 0) {
        const auto first = attention_locality(model, grid, window, plan, t, 0);
        above_first += first.mass_within[r] > uni.mass_within[r] + 1e-5;
      }
      border += uni.mass_within[r] < 1.0 - 1e-9;
      csv += fmt("%zu,%zu,%zu,%zu,%.6f,%.6f\n", i, t, stat.target_cell.row, stat.target_cell.col,
                 stat.mass_within[r], uni.mass_within[r]);
    }
  }
  write_file(g_out / "locality.csv", csv);
  const double frac = double(above) / double(total);
  return {frac >= 0.7, fmt("%zu/%zu masked targets (%.1f%%, need >=70%%) exceed uniform mass within radius 2 at "
                           "layer %zu; %zu targets can exceed it at k=%zu; layer 0 for reference: %zu",
                           above, total, 100.0 * frac, layer, border, k, above_first)};
}

Outcome determinism_criterion() {
  auto cfg = preset();
  const auto corpus = training_images(cfg);
  Trainer<float> a(cfg, corpus), b(cfg, corpus);
  const auto ma = a.run(6), mb = b.run(6);
  bool same = ma.size() == mb.size();
  for (std::size_t i = 0; same && i < ma.size(); ++i) same = format_metrics_line(ma[i]) == format_metrics_line(mb[i]);

  cfg.precision = 64;
  Trainer<double> straight(cfg, corpus);
  const auto full = straight.run(6);
  Trainer<double> first(cfg, corpus);
  first.run(3);
  const auto path = g_out / "resume.lmck";
  save_checkpoint(path, first.to_checkpoint(format_config(cfg)));
  Trainer<double> resumed(cfg, corpus);
  resumed.restore(load_checkpoint(path));
  const auto rest = resumed.run(3);
  bool bitwise = rest.size() == 3;
  for (std::size_t i = 0; bitwise && i < 3; ++i) {
    bitwise = rest[i].step == full[i + 3].step && rest[i].loss == full[i + 3].loss;
  }
  return {same && bitwise, fmt("same-seed metric streams %s over 6 steps; resume after step 3 %s at steps 4-6 "
                               "(64-bit, loss %.17g)",
                               same ? "identical" : "DIFFER", bitwise ? "bitwise equal" : "DIFFERS",
                               rest.empty() ? 0.0 : rest.back().loss)};
}

Outcome sweep_criterion() {
  auto cfg = preset();
  const std::vector<double> ratios{0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto rows = mask_ratio_sweep<float>(cfg, ratios, training_images(cfg), probe_images(cfg), 60);
  const auto csv = sweep_csv(rows);
  write_file(g_out / "sweep.csv", csv);
  const bool ok = rows.size() == ratios.size() &&
                  std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) {
                    return std::isfinite(r.final_loss) && r.probe_accuracy >= 0.0 && r.probe_accuracy <= 1.0;
                  }) &&
                  std::count(csv.begin(), csv.end(), '\n') == 8;
  std::string accs;
  for (const auto& r : rows) accs += fmt("%s%.2f:%.3f", accs.empty() ? "" : " ", r.mask_ratio, r.probe_accuracy);
  return {ok, fmt("%zu ratios, 60 steps each; probe accuracy %s", rows.size(), accs.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_out = argv[1];
  fs::create_directories(g_out);
  report(1, "gradient suite", gradient_criterion);
  report(2, "mask arithmetic", mask_criterion);
  report(3, "translation invariance", translation_criterion);
  report(4, "attention oracle", oracle_criterion);
  report(5, "attention complexity", complexity_criterion);
  report(6, "training sanity", training_criterion);
  report(7, "representation gain", probe_criterion);
  report(8, "attention locality", locality_criterion);
  report(9, "determinism and resume", determinism_criterion);
  report(10, "mask-ratio sweep", sweep_criterion);
  std::printf("%d of 10 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
