#include "lomar/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <thread>

#include "lomar/error.hpp"
#include "lomar/ops.hpp"

namespace lomar {

double TrainConfig::peak_lr() const {
  return lr_scaling ? base_lr * static_cast<double>(batch_size) / 256.0 : base_lr;
}

std::size_t TrainConfig::steps_per_epoch() const {
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  return std::max<std::size_t>(1, (data.corpus_size + batch_size - 1) / batch_size);
}

std::size_t TrainConfig::run_steps() const {
  const std::size_t total = schedule_steps();
  return max_steps > 0 ? std::min(max_steps, total) : total;
}

ModelConfig TrainConfig::model_config(std::size_t channels) const {
  ModelConfig m;
  m.encoder = encoder;
  m.encoder.k = sampler.k;
  m.patch_dim = data.patch_size * data.patch_size * channels;
  m.head_hidden = head_hidden;
  m.mask_token = mask_token;
  m.pixel_mean = data.pixel_mean;
  m.pixel_std = data.pixel_std;
  return m;
}

double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg) {
  const double peak = cfg.peak_lr();
  const double warm = static_cast<double>(cfg.warmup_epochs * steps_per_epoch);
  const double total = static_cast<double>(cfg.epochs * steps_per_epoch);
  const double s = static_cast<double>(step);
  if (s < warm) return peak * s / warm;
  if (s >= total) return 0.0;
  const double progress = (s - warm) / (total - warm);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
OptimizerState<T> OptimizerState<T>::for_params(const ParamList<T>& params) {
  OptimizerState st;
  for (const auto& p : params) {
    st.m.emplace_back(p.tensor->size(), T(0));
    st.v.emplace_back(p.tensor->size(), T(0));
  }
  return st;
}

template <typename T>
void adamw_step(const ParamList<T>& params, OptimizerState<T>& state, double lr, const TrainConfig& cfg) {
  if (state.m.size() != params.size()) throw DimensionError("optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor->size()) {
      throw DimensionError("optimizer moments for " + params[i].name + " have the wrong size");
    }
    for (T g : params[i].tensor->grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + params[i].name);
    }
  }
  state.step += 1;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.step)));
  const T eps = static_cast<T>(cfg.adam_eps);
  const T step_lr = static_cast<T>(lr);
  const T decay = static_cast<T>(1.0 - lr * cfg.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor->mutable_values();
    const auto g = params[i].tensor->grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T gj = g.empty() ? T(0) : g[j];
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      if (params[i].decay) w[j] *= decay;
      w[j] -= step_lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

std::size_t resolve_threads(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) {
    n = 1;
    if (const char* env = std::getenv("LOMAR_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && v > 0) n = static_cast<std::size_t>(v);
    }
  }
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(hw, 1) * 4);
}

template <typename T>
Tensor<T> image_loss(const Model<T>& model, const Image& image, const TrainConfig& cfg, std::uint64_t image_seed,
                     std::size_t* masked_targets) {
  Image view;
  const Image* src = &image;
  if (cfg.data.augment) {
    Rng aug(purpose_seed(image_seed, Purpose::augment));
    view = random_resized_crop(image, cfg.data.image_size, {cfg.data.crop_min_scale, 1.0}, aug);
    if (aug() & 1) view = flip_horizontal(view);
    src = &view;
  }
  const auto grid = patchify(*src, cfg.data.patch_size, cfg.data.target_norm);
  Rng window_rng(purpose_seed(image_seed, Purpose::windows));
  Rng mask_rng(purpose_seed(image_seed, Purpose::masks));
  const auto windows = sample_windows(grid.grid_h, grid.grid_w, cfg.sampler.k, cfg.sampler.n_views, window_rng);
  Tensor<T> total;
  std::size_t masked = 0;
  for (const auto& spec : windows) {
    const auto plan = make_mask_plan(cfg.sampler.k, cfg.sampler.mask_ratio, mask_rng);
    masked += plan.masked.size();
    const auto pass = window_forward(model, grid, spec, plan);
    const auto loss = reconstruction_loss(pass.preds, pass.targets, plan, cfg.loss_scope);
    total = total.defined() ? ops::add(total, loss) : loss;
  }
  if (masked_targets) *masked_targets = masked;
  return windows.size() == 1 ? total : ops::scale(total, T(1) / static_cast<T>(windows.size()));
}

std::string format_metrics_line(const StepMetrics& m) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g", m.step, m.lr, m.loss);
  return buf;
}

template <typename T>
Trainer<T>::Trainer(TrainConfig cfg, std::vector<Image> corpus) : cfg_(std::move(cfg)), corpus_(std::move(corpus)) {
  if (corpus_.empty()) throw ContractError("training corpus is empty");
  cfg_.data.corpus_size = corpus_.size();
  cfg_.encoder.k = cfg_.sampler.k;
  Rng init = make_rng(cfg_.seed, Purpose::init);
  model_ = Model<T>::init(cfg_.model_config(corpus_.front().channels), init);
  opt_ = OptimizerState<T>::for_params(model_.params());
  rng_ = make_rng(cfg_.seed, Purpose::data);
  threads_ = resolve_threads(cfg_.threads);
}

template <typename T>
std::vector<std::size_t> Trainer<T>::batch_indices(std::size_t s) const {
  const std::size_t spe = cfg_.steps_per_epoch();
  const std::size_t epoch = s / spe, within = s % spe;
  // Each epoch visits the corpus in a fresh order fixed by (seed, epoch).
  std::vector<std::size_t> order(corpus_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle(stream_seed(purpose_seed(cfg_.seed, Purpose::data), epoch));
  std::shuffle(order.begin(), order.end(), shuffle);
  std::vector<std::size_t> batch;
  for (std::size_t b = 0; b < cfg_.batch_size; ++b) batch.push_back(order[(within * cfg_.batch_size + b) % order.size()]);
  return batch;
}

template <typename T>
StepMetrics Trainer<T>::step() {
  const std::size_t spe = cfg_.steps_per_epoch();
  const double lr = lr_at(step_, spe, cfg_);
  const auto batch = batch_indices(step_);
  const std::uint64_t step_seed = rng_();
  auto params = model_.params();
  const std::size_t nb = batch.size();

  struct Slot {
    std::vector<std::vector<T>> grads;
    double loss = 0.0;
    std::size_t masked = 0;
  };
  auto run_image = [&](std::size_t b, Slot& slot) {
    Model<T> local = model_.shadow();
    const auto loss = image_loss(local, corpus_[batch[b]], cfg_, stream_seed(step_seed, b), &slot.masked);
    backward(loss);
    slot.loss = static_cast<double>(loss.item());
    auto lp = local.params();
    slot.grads.resize(lp.size());
    for (std::size_t i = 0; i < lp.size(); ++i) {
      const auto g = lp[i].tensor->grad();
      slot.grads[i].assign(g.begin(), g.end());
      if (slot.grads[i].empty()) slot.grads[i].assign(lp[i].tensor->size(), T(0));
    }
  };

  for (auto& p : params) p.tensor->zero_grad();
  StepMetrics metrics;
  auto accumulate = [&](const Slot& slot) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto g = params[i].tensor->grad_buffer();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += slot.grads[i][j];
    }
    metrics.loss += slot.loss;
    metrics.masked_targets += slot.masked;
  };

  // Gradients are summed in batch order whatever the thread count, so the
  // trajectory does not depend on LOMAR_THREADS.
  if (threads_ <= 1 || nb == 1) {
    for (std::size_t b = 0; b < nb; ++b) {
      Slot slot;
      run_image(b, slot);
      accumulate(slot);
    }
  } else {
    std::vector<Slot> slots(nb);
    std::vector<std::exception_ptr> errors(threads_);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < threads_; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t b = w; b < nb; b += threads_) run_image(b, slots[b]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (const auto& slot : slots) accumulate(slot);
  }

  const T inv = T(1) / static_cast<T>(nb);
  for (auto& p : params) {
    for (auto& g : p.tensor->grad_buffer()) g *= inv;
  }
  adamw_step(params, opt_, lr, cfg_);
  step_ += 1;
  metrics.step = step_;
  metrics.lr = lr;
  metrics.loss /= static_cast<double>(nb);
  return metrics;
}

template <typename T>
std::vector<StepMetrics> Trainer<T>::run(std::size_t steps, const std::function<void(const StepMetrics&)>& on_step) {
  std::vector<StepMetrics> out;
  const std::size_t end = std::min(cfg_.run_steps(), step_ + steps);
  while (step_ < end) {
    out.push_back(step());
    if (on_step) on_step(out.back());
  }
  return out;
}

template <typename T>
void store_model(Checkpoint& ckpt, Model<T>& model, const OptimizerState<T>* opt) {
  auto params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = *params[i].tensor;
    ckpt.tensors.push_back(CheckpointTensor::pack<T>(params[i].name, t.shape(), t.values()));
    if (opt) {
      ckpt.tensors.push_back(
          CheckpointTensor::pack<T>("adam.m." + params[i].name, t.shape(), std::span<const T>(opt->m[i])));
      ckpt.tensors.push_back(
          CheckpointTensor::pack<T>("adam.v." + params[i].name, t.shape(), std::span<const T>(opt->v[i])));
    }
  }
}

template <typename T>
void load_model(const Checkpoint& ckpt, Model<T>& model, OptimizerState<T>* opt) {
  auto params = model.params();
  if (opt) *opt = OptimizerState<T>::for_params(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = ckpt.find(params[i].name);
    if (entry.shape != params[i].tensor->shape()) {
      throw CheckpointError(CheckpointError::Kind::malformed,
                            "tensor " + params[i].name + " has shape " + shape_string(entry.shape) + ", model needs " +
                                shape_string(params[i].tensor->shape()));
    }
    entry.unpack(params[i].tensor->mutable_values());
    if (opt) {
      ckpt.find("adam.m." + params[i].name).unpack(std::span<T>(opt->m[i]));
      ckpt.find("adam.v." + params[i].name).unpack(std::span<T>(opt->v[i]));
    }
  }
  if (opt) opt->step = ckpt.step;
}

template <typename T>
Checkpoint Trainer<T>::to_checkpoint(const std::string& config_text) {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  store_model(ckpt, model_, &opt_);
  ckpt.rng_state = serialize_rng(rng_);
  ckpt.step = step_;
  return ckpt;
}

template <typename T>
void Trainer<T>::restore(const Checkpoint& ckpt) {
  load_model(ckpt, model_, &opt_);
  opt_.step = ckpt.step;
  rng_ = deserialize_rng(ckpt.rng_state);
  step_ = static_cast<std::size_t>(ckpt.step);
}

#define LOMAR_INSTANTIATE_TRAINER(T)                                                                            \
  template struct OptimizerState<T>;                                                                            \
  template void adamw_step<T>(const ParamList<T>&, OptimizerState<T>&, double, const TrainConfig&);            \
  template Tensor<T> image_loss<T>(const Model<T>&, const Image&, const TrainConfig&, std::uint64_t,            \
                                   std::size_t*);                                                               \
  template class Trainer<T>;                                                                                    \
  template void store_model<T>(Checkpoint&, Model<T>&, const OptimizerState<T>*);                               \
  template void load_model<T>(const Checkpoint&, Model<T>&, OptimizerState<T>*);

LOMAR_INSTANTIATE_TRAINER(float)
LOMAR_INSTANTIATE_TRAINER(double)

#undef LOMAR_INSTANTIATE_TRAINER

}  // namespace lomar
