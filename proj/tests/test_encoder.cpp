#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "attention_oracle.hpp"
#include "lomar/encoder.hpp"
#include "lomar/error.hpp"
#include "lomar/gradcheck.hpp"
#include "lomar/ops.hpp"
#include "lomar/sampler.hpp"
#include "test_util.hpp"

using namespace lomar;
using lomar::testing::random_tensor;
using lomar::testing::randomize;
using Td = Tensor<double>;

namespace {

EncoderWeights<double> random_encoder(EncoderConfig cfg, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  auto w = EncoderWeights<double>::init(cfg, rng);
  ParamList<double> params;
  w.collect(params);
  randomize(params, seed + 1, scale);
  return w;
}

}  // namespace

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.num_heads = 5;
  CHECK_THROWS_AS(cfg.validate(), DimensionError);
  cfg = EncoderConfig{};
  cfg.k = 0;
  CHECK_THROWS_AS(cfg.validate(), DimensionError);
}

TEST_CASE("RPE table geometry") {
  const auto table = RpeTable<double>::zeros(7, 4, 16);
  CHECK(table.entries() == 169);
  CHECK(table.heads.size() == 4);
  CHECK(table.offset_index(-6, -6) == 0);
  CHECK(table.offset_index(6, 6) == 168);
  CHECK_THROWS_AS(table.offset_index(7, 0), ContractError);

  // Every in-window pair resolves, and the diagonal is always offset (0,0).
  const auto idx = rpe_offset_index(7);
  const std::size_t center = table.offset_index(0, 0);
  for (std::size_t i = 0; i < 49; ++i) {
    CHECK(idx[i * 49 + i] == center);
    for (std::size_t j = 0; j < 49; ++j) {
      const long dr = long(j / 7) - long(i / 7), dc = long(j % 7) - long(i % 7);
      CHECK(idx[i * 49 + j] == table.offset_index(dr, dc));
    }
  }
}

TEST_CASE("rpe_bias value cases") {
  const auto q = random_tensor({4, 8}, 1);
  SUBCASE("zero table gives zero bias") {
    const auto bias = rpe_bias(q, Td::zeros({9, 8}), rpe_offset_index(2));
    for (double v : bias.values()) CHECK(v == 0.0);
  }
  SUBCASE("k = 1 is a single scaled dot product") {
    const auto q1 = random_tensor({1, 4}, 2);
    const auto r = random_tensor({1, 4}, 3);
    double dot = 0;
    for (std::size_t c = 0; c < 4; ++c) dot += q1.at(c) * r.at(c);
    CHECK(rpe_bias(q1, r, rpe_offset_index(1)).item() == doctest::Approx(dot / 2.0));
  }
  SUBCASE("diagonal uses the zero offset for every query") {
    const auto table = random_tensor({9, 8}, 4);
    const auto bias = rpe_bias(q, table, rpe_offset_index(2));
    for (std::size_t i = 0; i < 4; ++i) {
      double dot = 0;
      for (std::size_t c = 0; c < 8; ++c) dot += q.at(i, c) * table.at(4, c);
      CHECK(bias.at(i, i) == doctest::Approx(dot / std::sqrt(8.0)));
    }
  }
}

TEST_CASE("attention special cases") {
  EncoderConfig cfg{.embed_dim = 8, .num_heads = 2, .num_layers = 1, .mlp_ratio = 2.0, .k = 1};
  SUBCASE("single token returns its value projection through Wo") {
    auto w = random_encoder(cfg, 10);
    const auto x = random_tensor({1, 8}, 11);
    const auto& b = w.blocks[0];
    const auto out = attention(x, b, w.rpe);
    const auto expect = ops::add_bias(ops::matmul(ops::add_bias(ops::matmul(x, b.wv), b.bv), b.wo), b.bo);
    for (std::size_t i = 0; i < 8; ++i) CHECK(out.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
  }
  SUBCASE("zero queries and keys attend uniformly") {
    cfg.k = 3;
    auto w = random_encoder(cfg, 12);
    auto& b = w.blocks[0];
    for (auto* p : {&b.wq, &b.bq, &b.wk, &b.bk}) std::fill(p->mutable_values().begin(), p->mutable_values().end(), 0.0);
    const auto x = random_tensor({9, 8}, 13);
    const auto out = attention(x, b, RpeTable<double>::zeros(3, 2, 4));
    const auto v = ops::add_bias(ops::matmul(x, b.wv), b.bv);
    std::vector<double> mean(8, 0.0);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t c = 0; c < 8; ++c) mean[c] += v.at(i, c) / 9.0;
    const auto expect = ops::add_bias(ops::matmul(Td::from({1, 8}, mean), b.wo), b.bo);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t c = 0; c < 8; ++c) CHECK(out.at(i, c) == doctest::Approx(expect.at(c)).epsilon(1e-12));
  }
  SUBCASE("token count must match the window") {
    auto w = random_encoder(cfg, 14);
    CHECK_THROWS_AS(attention(random_tensor({2, 8}, 15), w.blocks[0], w.rpe), DimensionError);
  }
}

TEST_CASE("vectorized attention matches the double-loop oracle on 49 tokens") {
  EncoderConfig cfg{.embed_dim = 16, .num_heads = 4, .num_layers = 1, .mlp_ratio = 2.0, .k = 7};
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    auto w = random_encoder(cfg, 100 + trial);
    const auto x = random_tensor({49, 16}, 200 + trial);
    const auto got = attention(x, w.blocks[0], w.rpe);
    const auto want = lomar::testing::naive_attention(x, w.blocks[0], w.rpe);
    double worst = 0;
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got.at(i) - want[i]));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("encoder forward structure") {
  EncoderConfig cfg{.embed_dim = 8, .num_heads = 2, .num_layers = 0, .mlp_ratio = 2.0, .k = 2};
  SUBCASE("empty stack is the final LayerNorm") {
    auto w = random_encoder(cfg, 20);
    const auto x = random_tensor({4, 8}, 21);
    const auto out = encoder_forward(x, w);
    const auto expect = ops::layer_norm(x, w.final_gamma, w.final_beta, cfg.ln_eps);
    CHECK(std::equal(out.values().begin(), out.values().end(), expect.values().begin()));
  }
  SUBCASE("shape preserved for several depths") {
    for (std::size_t layers : {0u, 1u, 3u}) {
      cfg.num_layers = layers;
      auto w = random_encoder(cfg, 22);
      CHECK(encoder_forward(random_tensor({4, 8}, 23), w).shape() == Shape{4, 8});
    }
  }
  SUBCASE("wrong token count") {
    auto w = random_encoder(cfg, 24);
    CHECK_THROWS_AS(encoder_forward(random_tensor({5, 8}, 25), w), DimensionError);
  }
}

TEST_CASE("attention rows sum to one in every layer and head") {
  EncoderConfig cfg{.embed_dim = 16, .num_heads = 4, .num_layers = 3, .mlp_ratio = 2.0, .k = 4};
  auto w = random_encoder(cfg, 30);
  AttentionTrace trace;
  encoder_forward(random_tensor({16, 16}, 31), w, &trace);
  REQUIRE(trace.probs.size() == 3);
  for (const auto& layer : trace.probs) {
    REQUIRE(layer.size() == 4);
    for (const auto& p : layer) {
      for (std::size_t i = 0; i < 16; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 16; ++j) s += p[i * 16 + j];
        CHECK(std::abs(s - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("encoder output does not depend on the window origin") {
  // A periodic image (period = 3 patches) shows identical content in the
  // windows at (0,0) and (3,3).
  Image img = Image::filled(48, 48, 1);
  for (std::size_t y = 0; y < 48; ++y)
    for (std::size_t x = 0; x < 48; ++x) img.at(y, x, 0) = float(((y % 12) * 7 + (x % 12) * 3) % 17) / 16.0f;
  const auto grid = patchify(img, 4);
  Rng rng(40);
  auto embed = PatchEmbedWeights<double>::init(grid.patch_dim, 16, rng);
  EncoderConfig cfg{.embed_dim = 16, .num_heads = 2, .num_layers = 2, .mlp_ratio = 2.0, .k = 4};
  auto w = random_encoder(cfg, 41);
  const auto emb = embed_patches(grid, embed);
  const MaskPlan plan{4, 0.5, {1, 2, 5, 9, 10, 11, 14, 15}};
  const auto a = gather_window(emb, grid, WindowSpec{0, 0, 4}, plan, embed.bias);
  const auto b = gather_window(emb, grid, WindowSpec{3, 3, 4}, plan, embed.bias);
  REQUIRE(std::equal(a.tokens.values().begin(), a.tokens.values().end(), b.tokens.values().begin()));
  const auto oa = encoder_forward(a.tokens, w);
  const auto ob = encoder_forward(b.tokens, w);
  CHECK(std::equal(oa.values().begin(), oa.values().end(), ob.values().begin()));
}

TEST_CASE("relative positions break permutation covariance") {
  EncoderConfig cfg{.embed_dim = 8, .num_heads = 2, .num_layers = 1, .mlp_ratio = 2.0, .k = 2};
  auto w = random_encoder(cfg, 50, 0.8);
  const auto x = random_tensor({4, 8}, 51);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  const auto permuted_out = encoder_forward(ops::gather_rows<double>(x, perm), w);
  const auto out_permuted = ops::gather_rows<double>(encoder_forward(x, w), perm);
  double diff = 0;
  for (std::size_t i = 0; i < permuted_out.size(); ++i) diff += std::abs(permuted_out.at(i) - out_permuted.at(i));
  CHECK(diff > 1e-3);
}

TEST_CASE("encoder gradients w.r.t. every weight pass finite differences") {
  for (bool per_layer : {false, true}) {
    EncoderConfig cfg{.embed_dim = 8, .num_heads = 2, .num_layers = 2, .mlp_ratio = 2.0, .k = 2,
                      .per_layer_rpe = per_layer};
    auto w = random_encoder(cfg, 60);
    ParamList<double> refs;
    w.collect(refs);
    auto params = lomar::testing::tensors_of(refs);
    const auto x = random_tensor({4, 8}, 61);
    const auto probe = random_tensor({4, 8}, 62);
    const auto report = finite_diff_check(
        "encoder", [&] { return ops::mean(ops::mul(encoder_forward(x, w), probe)); }, params,
        {.step = 1e-6, .tolerance = 1e-3});
    CHECK(report.passed);
    CHECK(report.max_relative_error < 1e-5);
  }
}
