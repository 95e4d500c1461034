#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "lomar/bench.hpp"
#include "lomar/corpus.hpp"
#include "lomar/error.hpp"
#include "lomar/trainer.hpp"

using namespace lomar;

TEST_CASE("analytic attention cost") {
  const auto c = attention_cost(14, 14, 4, 7);
  CHECK(c.local_cost == 196 + 4 * 2401);
  CHECK(c.local_cost == 9800);
  CHECK(c.global_cost == 38416);
  SUBCASE("local term is exactly linear in n") {
    const double base = attention_cost(28, 28, 1, 7).local_cost;
    for (std::size_t n = 1; n <= 8; ++n) {
      CHECK(attention_cost(28, 28, n, 7).local_cost - 784 == n * (base - 784));
    }
  }
  SUBCASE("a single full-grid window costs the global term plus hw") {
    for (std::size_t s : {4u, 8u, 14u}) {
      const auto g = attention_cost(s, s, 1, s);
      CHECK(g.local_cost - s * s == g.global_cost);
    }
  }
  CHECK_THROWS_AS(attention_cost(8, 8, 1, 9), ParameterError);
  CHECK_THROWS_AS(attention_cost(8, 8, 0, 4), ParameterError);
}

TEST_CASE("least-squares helpers") {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  CHECK(fit_slope(x, y) == doctest::Approx(2.0));
  CHECK(linear_r2(x, y) == doctest::Approx(1.0));
  const std::vector<double> lx{std::log(64.0), std::log(196.0), std::log(784.0)};
  std::vector<double> ly;
  for (double v : lx) ly.push_back(2.0 * v + 0.3);
  CHECK(fit_slope(lx, ly) == doctest::Approx(2.0));
  const std::vector<double> noisy{1, -1, 1, -1};
  CHECK(linear_r2(x, noisy) < 0.5);
}

TEST_CASE("uniform locality enumeration") {
  const auto u = uniform_locality(7, 24);
  CHECK(u.target_cell == GridCoord{3, 3});
  // Rings at distance r hold 8r cells: (8 + 32 + 72) / 49.
  CHECK(u.mean_distance == doctest::Approx(112.0 / 49.0).epsilon(1e-12));
  CHECK(u.mass_within[0] == doctest::Approx(1.0 / 49));
  CHECK(u.mass_within[1] == doctest::Approx(9.0 / 49));
  CHECK(u.mass_within[2] == doctest::Approx(25.0 / 49));
  CHECK(u.mass_within[6] == doctest::Approx(1.0));
  const auto corner = uniform_locality(4, 0);
  CHECK(corner.mass_within[2] == doctest::Approx(9.0 / 16));
  CHECK(uniform_locality(4, 5).mass_within[2] == doctest::Approx(1.0));
  const auto e = uniform_locality(3, 4, DistanceMetric::euclidean);
  CHECK(e.mean_distance == doctest::Approx((4.0 + 4.0 * std::sqrt(2.0)) / 9.0));
}

TEST_CASE("locality profile of concentrated rows") {
  std::vector<double> self(49, 0.0);
  self[24] = 1.0;
  const auto s = locality_profile(self, 7, 24);
  CHECK(s.mean_distance == 0.0);
  CHECK(s.mass_within[0] == 1.0);
  std::vector<double> far(49, 0.0);
  far[0] = 1.0;
  CHECK(locality_profile(far, 7, 24).mean_distance == 3.0);
  CHECK(locality_profile(far, 7, 24).mass_within[2] == 0.0);
  CHECK_THROWS_AS(locality_profile(self, 6, 24), DimensionError);
  CHECK(locality_csv(s, uniform_locality(7, 24)).rfind("radius,mass_within,uniform_within\n", 0) == 0);
}

TEST_CASE("attention locality of a model") {
  TrainConfig cfg;
  cfg.sampler = {4, 2, 0.75};
  cfg.encoder = EncoderConfig{.embed_dim = 16, .num_heads = 2, .num_layers = 2, .mlp_ratio = 2.0, .k = 4};
  cfg.data.image_size = 32;
  Rng rng(2);
  auto model = Model<double>::init(cfg.model_config(), rng);
  const auto img = synthetic_corpus(1, 32, 10, 3).front().image;
  const auto grid = patchify(img, 8);
  Rng mrng(4);
  const auto plan = make_mask_plan(4, 0.75, mrng);
  const WindowSpec spec{0, 0, 4};
  for (std::size_t layer = 0; layer < 2; ++layer) {
    const auto stat = attention_locality(model, grid, spec, plan, plan.masked[0], layer);
    CHECK(std::accumulate(stat.mass.begin(), stat.mass.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stat.mass_within.back() == doctest::Approx(1.0));
    for (std::size_t r = 1; r < stat.mass_within.size(); ++r) CHECK(stat.mass_within[r] >= stat.mass_within[r - 1]);
  }
  std::size_t visible = 0;
  while (plan.is_masked(visible)) ++visible;
  CHECK_THROWS_AS(attention_locality(model, grid, spec, plan, visible, 0), ContractError);
  CHECK_THROWS_AS(attention_locality(model, grid, spec, plan, plan.masked[0], 2), ContractError);
}

TEST_CASE("reconstruction render") {
  TrainConfig cfg;
  cfg.sampler = {4, 2, 0.75};
  cfg.encoder = EncoderConfig{.embed_dim = 16, .num_heads = 2, .num_layers = 1, .mlp_ratio = 2.0, .k = 4};
  cfg.data.image_size = 32;
  Rng rng(2);
  auto model = Model<float>::init(cfg.model_config(), rng);
  const auto img = synthetic_corpus(1, 48, 10, 3).front().image;
  const auto grid = patchify(img, 8);
  const WindowSpec spec{1, 2, 4};
  const MaskPlan plan{4, 0.75, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  const auto out = render_reconstruction(model, img, grid, spec, plan);
  const std::size_t win = 32, gap = 4;
  CHECK(out.height == 48);
  CHECK(out.width == 48 + 3 * (win + gap));
  CHECK(out.channels == 3);
  // Window panel is an exact crop of the original.
  const std::size_t wx = 48 + gap;
  for (std::size_t y = 0; y < win; ++y)
    for (std::size_t x = 0; x < win; ++x)
      CHECK(out.at(y, wx + x, 1) == img.at(8 + y, 16 + x, 1));
  // Masked panel: the 12 masked patches are black, the rest copies the window.
  const std::size_t mx = wx + win + gap;
  std::size_t black = 0;
  for (std::size_t y = 0; y < win; ++y)
    for (std::size_t x = 0; x < win; ++x) {
      const bool masked = plan.is_masked((y / 8) * 4 + x / 8);
      if (masked) black += out.at(y, mx + x, 0) == 0.0f && out.at(y, mx + x, 2) == 0.0f;
      else CHECK(out.at(y, mx + x, 0) == out.at(y, wx + x, 0));
    }
  CHECK(black == 12 * 64);
  // Below the window panels the canvas is white.
  CHECK(out.at(40, wx + 1, 0) == 1.0f);

  RenderOptions copy;
  copy.copy_visible = true;
  const auto c = render_reconstruction(model, img, grid, spec, plan, copy);
  const std::size_t rx = mx + win + gap;
  for (std::size_t y = 24; y < 32; ++y)
    for (std::size_t x = 0; x < win; ++x) CHECK(c.at(y, rx + x, 0) == doctest::Approx(img.at(8 + y, 16 + x, 0)).epsilon(1e-5));
  CHECK_THROWS_AS(render_reconstruction(model, img, grid, spec, plan, "/nonexistent_dir/x.png"), IoError);
}

TEST_CASE("timed attention produces positive medians and CSV") {
  BenchConfig cfg;
  cfg.embed_dim = 16;
  cfg.num_heads = 2;
  cfg.repetitions = 2;
  cfg.grids = {8, 14};
  cfg.views = {1, 2};
  cfg.m = 4;
  cfg.n = 2;
  CHECK(timer_resolution() > 0.0);
  const auto report = run_scaling_bench(cfg);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].config == "8x8_n2_m4");
  CHECK(report.rows[1].analytic_global == 196.0 * 196.0);
  CHECK(report.rows[0].measured_global_s > 0.0);
  std::istringstream csv(scaling_csv(report));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 3);
  CHECK(views_csv(report).rfind("n,measured_local_s\n", 0) == 0);
}
