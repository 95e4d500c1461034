#include <doctest.h>

#include <cmath>

#include "lomar/encoder.hpp"
#include "lomar/error.hpp"
#include "lomar/gradcheck.hpp"
#include "lomar/head_loss.hpp"
#include "lomar/ops.hpp"
#include "test_util.hpp"

using namespace lomar;
using lomar::testing::random_tensor;
using Td = Tensor<double>;

namespace {

// Independent scalar accumulation of the masked objective.
double brute_masked_mse(const Td& p, const Td& t, const std::vector<std::size_t>& masked) {
  long double total = 0;
  for (std::size_t i : masked) {
    long double row = 0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const long double d = (long double)p.at(i, j) - (long double)t.at(i, j);
      row += d * d;
    }
    total += row / p.cols();
  }
  return double(total / masked.size());
}

}  // namespace

TEST_CASE("reconstruct value cases") {
  const auto latents = random_tensor({9, 6}, 1);
  SUBCASE("zero weights predict zeros") {
    HeadWeights<double> h{Td(), Td(), Td::zeros({6, 12}), Td::zeros({12})};
    const auto out = reconstruct(latents, h);
    for (double v : out.values()) CHECK(v == 0.0);
  }
  SUBCASE("identity linear head passes latents through") {
    std::vector<double> eye(36, 0.0);
    for (std::size_t i = 0; i < 6; ++i) eye[i * 6 + i] = 1.0;
    HeadWeights<double> h{Td(), Td(), Td::from({6, 6}, eye), Td::zeros({6})};
    const auto out = reconstruct(latents, h);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == latents.at(i));
  }
  SUBCASE("dimension mismatch") {
    Rng rng(2);
    auto h = HeadWeights<double>::init(5, 8, 12, rng);
    CHECK_THROWS_AS(reconstruct(latents, h), DimensionError);
  }
  SUBCASE("gradient through the MLP head") {
    Rng rng(3);
    auto h = HeadWeights<double>::init(6, 10, 12, rng);
    ParamList<double> refs;
    h.collect(refs);
    lomar::testing::randomize(refs, 4, 0.5);
    auto params = lomar::testing::tensors_of(refs);
    const auto target = random_tensor({9, 12}, 5);
    const MaskPlan plan{3, 0.5, {0, 3, 4, 8}};
    const auto report = finite_diff_check(
        "head", [&] { return masked_mse_loss(reconstruct(latents, h), target, plan); }, params,
        {.tolerance = 1e-4});
    CHECK(report.passed);
  }
}

TEST_CASE("masked_mse definition") {
  const auto t = random_tensor({4, 5}, 10);
  const MaskPlan plan{2, 0.5, {1, 3}};
  CHECK(masked_mse(t, t, plan).value == 0.0);
  CHECK(masked_mse(t, t, plan).masked_count == 2);

  std::vector<double> shifted(t.values().begin(), t.values().end());
  for (double& v : shifted) v += 1.0;
  CHECK(masked_mse(Td::from({4, 5}, shifted), t, plan).value == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(masked_mse(t, t, MaskPlan{2, 0.0, {}}), ContractError);
  CHECK_THROWS_AS(masked_mse(t, random_tensor({4, 6}, 11), plan), DimensionError);
}

TEST_CASE("masked_mse matches a scalar double loop") {
  Rng rng(12);
  for (std::uint64_t trial = 0; trial < 25; ++trial) {
    const auto p = random_tensor({49, 48}, 100 + trial);
    const auto t = random_tensor({49, 48}, 200 + trial);
    const auto plan = make_mask_plan(7, 0.8, rng);
    CHECK(std::abs(masked_mse(p, t, plan).value - brute_masked_mse(p, t, plan.masked)) <= 1e-7);
  }
}

TEST_CASE("visible rows never influence the masked loss") {
  Rng rng(13);
  const auto plan = make_mask_plan(4, 0.5, rng);
  const auto t = random_tensor({16, 8}, 14);
  auto p = random_tensor({16, 8}, 15);
  const double before = masked_mse(p, t, plan).value;
  auto values = p.mutable_values();
  for (std::size_t i = 0; i < 16; ++i) {
    if (plan.is_masked(i)) continue;
    for (std::size_t j = 0; j < 8; ++j) values[i * 8 + j] += 1e6 * double(i + j + 1);
  }
  CHECK(masked_mse(p, t, plan).value == before);

  // Loss is zero exactly when masked rows agree.
  auto q = t.clone();
  CHECK(masked_mse(q, t, plan).value == 0.0);
  q.mutable_values()[plan.masked.front() * 8] += 1e-3;
  CHECK(masked_mse(q, t, plan).value > 0.0);
}

TEST_CASE("all-patch loss scope") {
  const auto p = random_tensor({4, 3}, 16);
  const auto t = random_tensor({4, 3}, 17);
  const MaskPlan plan{2, 0.25, {2}};
  CHECK(reconstruction_loss(p, t, plan, LossScope::all).item() == doctest::Approx(ops::mse(p, t).item()));
  CHECK(reconstruction_loss(p, t, plan, LossScope::masked).item() == doctest::Approx(masked_mse(p, t, plan).value));
}

TEST_CASE("denormalization") {
  const std::vector<double> zeros(8, 0.0);
  for (double v : denormalize_prediction(zeros, 0.5, 0.2)) CHECK(v == 0.5);
  const std::vector<double> big(4, 100.0);
  for (double v : denormalize_prediction(big, 0.5, 0.2)) CHECK(v == 1.0);

  const auto pixels = lomar::testing::random_vector(48, 18, 0.1, 0.9);
  const auto norm = normalize_patch(pixels);
  double mu = 0, var = 0;
  for (double v : pixels) mu += v;
  mu /= 48.0;
  for (double v : pixels) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / 48.0 + kTargetEps);
  const auto back = denormalize_prediction(norm, mu, sd);
  for (std::size_t i = 0; i < 48; ++i) CHECK(std::abs(back[i] - pixels[i]) <= 1e-5);
}

TEST_CASE("full pipeline gradient passes finite differences") {
  // 32×32 RGB image, patch 4 → 8×8 grid of 48-dim patches; window k=4.
  Image img = Image::filled(32, 32, 3);
  std::mt19937_64 pix(70);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img.pixels) v = u(pix);
  const auto grid = patchify(img, 4);

  Rng rng(71);
  EncoderConfig cfg{.embed_dim = 16, .num_heads = 2, .num_layers = 2, .mlp_ratio = 2.0, .k = 4};
  auto embed = PatchEmbedWeights<double>::init(grid.patch_dim, 16, rng);
  auto enc = EncoderWeights<double>::init(cfg, rng);
  auto head = HeadWeights<double>::init(16, 16, grid.patch_dim, rng);
  ParamList<double> refs{{"embed.proj", &embed.projection, true}, {"embed.bias", &embed.bias, false}};
  enc.collect(refs);
  head.collect(refs);
  lomar::testing::randomize(refs, 72, 0.25);
  auto params = lomar::testing::tensors_of(refs);

  const WindowSpec spec{2, 3, 4};
  const auto plan = make_mask_plan(4, 0.75, rng);
  const auto report = finite_diff_check(
      "pipeline",
      [&] {
        const auto emb = embed_patches(grid, embed);
        const auto win = gather_window(emb, grid, spec, plan, embed.bias);
        return masked_mse_loss(reconstruct(encoder_forward(win.tokens, enc), head), win.targets, plan);
      },
      params, {.tolerance = 1e-3});
  CHECK(report.passed);
  MESSAGE("pipeline max relative error " << report.max_relative_error);
}
