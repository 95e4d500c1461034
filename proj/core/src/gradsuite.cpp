#include "lomar/gradsuite.hpp"

#include <cstdio>
#include <random>

#include "lomar/encoder.hpp"
#include "lomar/head_loss.hpp"
#include "lomar/ops.hpp"
#include "lomar/patchify.hpp"
#include "lomar/sampler.hpp"

namespace lomar {

namespace {

using Td = Tensor<double>;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  Td random(Shape shape, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = dist(rng_);
    return Td::from(std::move(shape), std::move(v), true);
  }

  template <typename F>
  void check(const std::string& name, std::vector<Td> params, F&& build, double tol = 1e-6) {
    auto loss = probe_of(build);
    reports_.push_back(finite_diff_check(name, loss, params, {.step = step_, .tolerance = tol}));
  }

  template <typename F>
  void check_scalar(const std::string& name, std::vector<Td> params, F&& build, double tol = 1e-6) {
    reports_.push_back(finite_diff_check(name, LossFn(build), params, {.step = step_, .tolerance = tol}));
  }

  std::mt19937_64& rng() { return rng_; }
  std::vector<GradCheckReport> take() { return std::move(reports_); }

 private:
  template <typename F>
  LossFn probe_of(F& build) {
    // Fixed random weights per output coordinate; the loss stays a pure
    // function of the parameters.
    auto weights = build().detach();
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> w(weights.size());
    for (auto& x : w) x = dist(rng_);
    auto fixed = Td::from(weights.shape(), std::move(w));
    return [build, fixed] { return ops::sum(ops::mul(build(), fixed)); };
  }

  std::mt19937_64 rng_;
  double step_ = 1e-5;
  std::vector<GradCheckReport> reports_;
};

}  // namespace

std::vector<GradCheckReport> gradient_suite(std::uint64_t seed) {
  Suite s(seed);

  auto a = s.random({4, 5}), b = s.random({5, 3}), c = s.random({4, 5}), bt = s.random({3, 5});
  s.check("matmul", {a, b}, [=] { return ops::matmul(a, b); });
  s.check("matmul_nt", {a, bt}, [=] { return ops::matmul_nt(a, bt); });
  s.check("add", {a, c}, [=] { return ops::add(a, c); });
  s.check("sub", {a, c}, [=] { return ops::sub(a, c); });
  s.check("mul", {a, c}, [=] { return ops::mul(a, c); });
  s.check("scale", {a}, [=] { return ops::scale(a, 1.7); });
  auto bias = s.random({5});
  s.check("add_bias", {a, bias}, [=] { return ops::add_bias(a, bias); });
  s.check("softmax_rows", {a}, [=] { return ops::softmax_rows(a); });
  auto gamma = s.random({5}), beta = s.random({5});
  s.check("layer_norm", {a, gamma, beta}, [=] { return ops::layer_norm(a, gamma, beta, 1e-6); });
  s.check("gelu", {a}, [=] { return ops::gelu(a); });
  s.check("slice_cols", {a}, [=] { return ops::slice_cols(a, 1, 3); });
  s.check("concat_cols", {a, b}, [=] { return ops::concat_cols<double>({ops::matmul(a, b), a}); });
  const std::vector<std::size_t> rows{3, 0, 0, 2, 1};
  s.check("gather_rows", {a}, [=] { return ops::gather_rows<double>(a, rows); });
  const std::vector<bool> replace{false, true, false, true};
  s.check("replace_rows", {a, bias}, [=] { return ops::replace_rows(a, replace, bias); });
  const std::vector<std::size_t> inrow{0, 4, 4, 1, 1, 1, 2, 3, 0, 3, 3, 2};
  s.check("gather_in_rows", {a}, [=] { return ops::gather_in_rows<double>(a, inrow, 3); });
  s.check_scalar("sum", {a}, [=] { return ops::sum(ops::mul(a, a)); });
  s.check_scalar("mean", {a}, [=] { return ops::mean(ops::mul(a, c)); });
  s.check_scalar("mse", {a, c}, [=] { return ops::mse(a, c); });
  const std::vector<int> labels{0, 4, 2, 2};
  s.check_scalar("softmax_cross_entropy", {a}, [=] { return ops::softmax_cross_entropy<double>(a, labels); });

  // Attention pieces on a 2×2 window (4 tokens, d=8, two heads).
  const EncoderConfig small{.embed_dim = 8, .num_heads = 2, .num_layers = 1, .mlp_ratio = 2.0, .k = 2};
  Rng init(seed + 1);
  auto q = s.random({4, 4}), table = s.random({9, 4});
  const auto offsets = rpe_offset_index(2);
  s.check("rpe_bias", {q, table}, [=] { return rpe_bias(q, table, offsets); });
  auto enc = EncoderWeights<double>::init(small, init);
  ParamList<double> enc_refs;
  enc.collect(enc_refs);
  for (auto& p : enc_refs) {
    std::normal_distribution<double> d(0.0, 0.4);
    for (auto& v : p.tensor->mutable_values()) v = d(s.rng());
  }
  auto x = s.random({4, 8});
  std::vector<Td> attn_params{x, enc.blocks[0].wq, enc.blocks[0].wk, enc.blocks[0].wv, enc.blocks[0].wo,
                              enc.blocks[0].bq, enc.rpe.heads[0], enc.rpe.heads[1]};
  s.check("attention", attn_params, [=] { return attention(x, enc.blocks[0], enc.rpe); });

  auto head = HeadWeights<double>::init(8, 4, 6, init);
  ParamList<double> head_refs;
  head.collect(head_refs);
  for (auto& p : head_refs) {
    std::normal_distribution<double> d(0.0, 0.4);
    for (auto& v : p.tensor->mutable_values()) v = d(s.rng());
  }
  std::vector<Td> head_params{x};
  for (auto& p : head_refs) head_params.push_back(*p.tensor);
  s.check("reconstruct", head_params, [=] { return reconstruct(x, head); });
  auto preds = s.random({4, 6}), targets = s.random({4, 6});
  const MaskPlan plan2{2, 0.5, {1, 2}};
  s.check_scalar("masked_mse", {preds, targets}, [=] { return masked_mse_loss(preds, targets, plan2); });

  // Full pipeline: 32×32 RGB, patch 4, window k=4, L=2, d=16, H=2.
  Image img = Image::filled(32, 32, 3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img.pixels) v = u(s.rng());
  const auto grid = patchify(img, 4);
  const EncoderConfig cfg{.embed_dim = 16, .num_heads = 2, .num_layers = 2, .mlp_ratio = 2.0, .k = 4};
  auto embed = PatchEmbedWeights<double>::init(grid.patch_dim, 16, init);
  auto penc = EncoderWeights<double>::init(cfg, init);
  auto phead = HeadWeights<double>::init(16, 16, grid.patch_dim, init);
  ParamList<double> refs{{"embed.proj", &embed.projection, true}, {"embed.bias", &embed.bias, false}};
  penc.collect(refs);
  phead.collect(refs);
  std::normal_distribution<double> d(0.0, 0.25);
  for (auto& p : refs)
    for (auto& v : p.tensor->mutable_values()) v = d(s.rng());
  std::vector<Td> pparams;
  for (auto& p : refs) pparams.push_back(*p.tensor);
  const WindowSpec spec{2, 3, 4};
  Rng mrng(seed + 2);
  const auto plan = make_mask_plan(4, 0.75, mrng);
  s.check_scalar(
      "pipeline", pparams,
      [=] {
        const auto win = gather_window(embed_patches(grid, embed), grid, spec, plan, embed.bias);
        return masked_mse_loss(reconstruct(encoder_forward(win.tokens, penc), phead), win.targets, plan);
      },
      1e-3);
  return s.take();
}

std::string gradcheck_csv(const std::vector<GradCheckReport>& reports) {
  std::string out = "op,max_relative_error,tolerance,passed\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%.3e,%.0e,%d\n", r.op_name.c_str(), r.max_relative_error, r.tolerance,
                  r.passed ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace lomar
