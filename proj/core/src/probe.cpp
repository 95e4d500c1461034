#include "lomar/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <thread>

#include "lomar/error.hpp"
#include "lomar/ops.hpp"

namespace lomar {

template <typename T>
Model<T> frozen(const Model<T>& model) {
  Model<T> copy = model;
  for (auto& p : copy.params()) *p.tensor = p.tensor->detach();
  return copy;
}

std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t k) {
  if (k == 0 || k > extent) throw DimensionError("window side exceeds the grid");
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o + k <= extent; o += k) out.push_back(o);
  if (out.back() + k < extent) out.push_back(extent - k);
  return out;
}

template <typename T>
std::vector<double> pooled_features(const Model<T>& model, const Image& image, const DataConfig& data) {
  const auto grid = patchify(image, data.patch_size, data.target_norm);
  const std::size_t k = model.config.encoder.k, d = model.config.encoder.embed_dim;
  std::vector<double> sums(grid.num_patches() * d, 0.0);
  std::vector<std::size_t> counts(grid.num_patches(), 0);
  const MaskPlan none{k, 0.0, {}};
  for (std::size_t top : tile_origins(grid.grid_h, k)) {
    for (std::size_t left : tile_origins(grid.grid_w, k)) {
      const auto pass = window_forward(model, grid, WindowSpec{top, left, k}, none);
      for (std::size_t j = 0; j < pass.patch_index.size(); ++j) {
        const std::size_t p = pass.patch_index[j];
        counts[p] += 1;
        for (std::size_t c = 0; c < d; ++c) sums[p * d + c] += static_cast<double>(pass.latents.at(j, c));
      }
    }
  }
  std::vector<double> feature(d, 0.0);
  for (std::size_t p = 0; p < counts.size(); ++p) {
    for (std::size_t c = 0; c < d; ++c) feature[c] += sums[p * d + c] / static_cast<double>(counts[p]);
  }
  for (auto& f : feature) f /= static_cast<double>(counts.size());
  return feature;
}

template <typename T>
std::vector<std::vector<double>> pooled_features(const Model<T>& model, const std::vector<Image>& images,
                                                 const DataConfig& data, std::size_t threads) {
  const Model<T> fixed = frozen(model);
  std::vector<std::vector<double>> out(images.size());
  threads = std::max<std::size_t>(1, std::min(threads, images.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < images.size(); ++i) out[i] = pooled_features(fixed, images[i], data);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < images.size(); i += threads) out[i] = pooled_features(fixed, images[i], data);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

ProbeResult fit_linear_probe(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                             const ProbeConfig& cfg, std::uint64_t seed) {
  if (features.size() != labels.size() || features.empty()) {
    throw DimensionError("probe needs one label per feature vector");
  }
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw ContractError("linear probe needs at least two classes");
  if (*distinct.begin() < 0) throw ContractError("probe labels must be non-negative");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw ParameterError("probe train_fraction must be in (0, 1)");
  }
  const std::size_t n = features.size(), dim = features.front().size();
  const std::size_t classes = static_cast<std::size_t>(*distinct.rbegin()) + 1;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(purpose_seed(seed, Purpose::probe));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n))), 1, n - 1);

  // Standardize with training statistics.
  std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
  for (std::size_t i = 0; i < n_train; ++i)
    for (std::size_t c = 0; c < dim; ++c) mu[c] += features[order[i]][c];
  for (auto& m : mu) m /= static_cast<double>(n_train);
  for (std::size_t i = 0; i < n_train; ++i)
    for (std::size_t c = 0; c < dim; ++c) sd[c] += std::pow(features[order[i]][c] - mu[c], 2);
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(n_train) + 1e-12);
  auto matrix = [&](std::size_t begin, std::size_t end, std::vector<int>& y) {
    std::vector<double> x;
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t c = 0; c < dim; ++c) x.push_back((features[order[i]][c] - mu[c]) / sd[c]);
      y.push_back(labels[order[i]]);
    }
    return Tensor<double>::from({end - begin, dim}, std::move(x));
  };
  std::vector<int> y_train, y_test;
  const auto x_train = matrix(0, n_train, y_train);
  const auto x_test = matrix(n_train, n, y_test);

  auto w = Tensor<double>::zeros({dim, classes}, true);
  auto b = Tensor<double>::zeros({classes}, true);
  ParamList<double> params{{"probe.w", &w, true}, {"probe.b", &b, false}};
  auto state = OptimizerState<double>::for_params(params);
  TrainConfig opt;
  opt.weight_decay = 0.0;
  opt.beta2 = 0.999;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    w.zero_grad();
    b.zero_grad();
    backward(ops::softmax_cross_entropy(ops::add_bias(ops::matmul(x_train, w), b), std::span<const int>(y_train)));
    // L2 penalty (weight_decay / 2)·‖W‖² on the weights only.
    auto g = w.grad_buffer();
    const auto wv = w.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.weight_decay * wv[i];
    adamw_step(params, state, cfg.lr, opt);
  }
  auto accuracy = [&](const Tensor<double>& x, const std::vector<int>& y) {
    if (y.empty()) return 0.0;
    const auto logits = ops::add_bias(ops::matmul(x.detach(), w.detach()), b.detach());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (logits.at(i, c) > logits.at(i, best)) best = c;
      }
      hits += static_cast<int>(best) == y[i];
    }
    return static_cast<double>(hits) / static_cast<double>(y.size());
  };
  return {accuracy(x_train, y_train), accuracy(x_test, y_test), n_train, n - n_train, classes};
}

template <typename T>
ProbeResult linear_probe(const Model<T>& model, const std::vector<LabeledImage>& set, const DataConfig& data,
                         const ProbeConfig& cfg, std::uint64_t seed, std::size_t threads) {
  std::vector<int> labels;
  for (const auto& s : set) labels.push_back(s.label);
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw ContractError("linear probe needs at least two classes");
  return fit_linear_probe(pooled_features(model, images_of(set), data, threads), labels, cfg, seed);
}

template <typename T>
std::vector<SweepRow> mask_ratio_sweep(const TrainConfig& base, const std::vector<double>& ratios,
                                       const std::vector<Image>& corpus, const std::vector<LabeledImage>& probe_set,
                                       std::size_t steps) {
  std::vector<SweepRow> rows;
  for (double ratio : ratios) {
    TrainConfig cfg = base;
    cfg.sampler.mask_ratio = ratio;
    if (masked_count(cfg.sampler.k, ratio) == 0) {
      throw ParameterError("mask ratio " + std::to_string(ratio) + " masks no patch at k=" +
                           std::to_string(cfg.sampler.k));
    }
    Trainer<T> trainer(cfg, corpus);
    const auto metrics = trainer.run(steps);
    SweepRow row;
    row.mask_ratio = ratio;
    row.final_loss = metrics.empty() ? 0.0 : metrics.back().loss;
    row.probe_accuracy =
        linear_probe(trainer.model(), probe_set, cfg.data, cfg.probe, cfg.seed, resolve_threads(cfg.threads))
            .test_accuracy;
    rows.push_back(row);
  }
  return rows;
}

std::vector<Image> training_images(const TrainConfig& cfg) {
  const auto& d = cfg.data;
  if (!d.dir.empty()) return load_image_dir(d.dir, d.image_size);
  return images_of(synthetic_corpus(d.corpus_size, d.image_size, d.num_classes, cfg.seed));
}

std::vector<LabeledImage> probe_images(const TrainConfig& cfg) {
  const auto& d = cfg.data;
  if (!d.dir.empty()) return load_labeled_dir(d.dir, d.image_size);
  return synthetic_corpus(cfg.probe.samples, d.image_size, d.num_classes, purpose_seed(cfg.seed, Purpose::probe));
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "mask_ratio,final_loss,probe_accuracy\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.4g,%.9g,%.6g\n", r.mask_ratio, r.final_loss, r.probe_accuracy);
    out += buf;
  }
  return out;
}

#define LOMAR_INSTANTIATE_PROBE(T)                                                                              \
  template Model<T> frozen<T>(const Model<T>&);                                                                 \
  template std::vector<double> pooled_features<T>(const Model<T>&, const Image&, const DataConfig&);            \
  template std::vector<std::vector<double>> pooled_features<T>(const Model<T>&, const std::vector<Image>&,       \
                                                               const DataConfig&, std::size_t);                 \
  template ProbeResult linear_probe<T>(const Model<T>&, const std::vector<LabeledImage>&, const DataConfig&,     \
                                       const ProbeConfig&, std::uint64_t, std::size_t);                         \
  template std::vector<SweepRow> mask_ratio_sweep<T>(const TrainConfig&, const std::vector<double>&,            \
                                                     const std::vector<Image>&,                                 \
                                                     const std::vector<LabeledImage>&, std::size_t);

LOMAR_INSTANTIATE_PROBE(float)
LOMAR_INSTANTIATE_PROBE(double)

#undef LOMAR_INSTANTIATE_PROBE

}  // namespace lomar
