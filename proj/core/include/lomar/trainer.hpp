#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lomar/checkpoint.hpp"
#include "lomar/encoder.hpp"
#include "lomar/head_loss.hpp"
#include "lomar/image.hpp"
#include "lomar/model.hpp"
#include "lomar/patchify.hpp"
#include "lomar/rng.hpp"
#include "lomar/sampler.hpp"

namespace lomar {

struct DataConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  /// Synthetic corpus size; ignored when `dir` is set.
  std::size_t corpus_size = 640;
  std::size_t num_classes = 10;
  /// Directory of training images; empty selects the synthetic corpus.
  std::string dir;
  /// Random-resized crop plus horizontal flip.
  bool augment = true;
  double crop_min_scale = 0.2;
  TargetNorm target_norm = TargetNorm::joint;
  /// Input standardization applied before the patch embedding.
  double pixel_mean = 0.5;
  double pixel_std = 0.25;
};

struct ProbeConfig {
  std::size_t samples = 1000;
  double train_fraction = 0.5;
  std::size_t epochs = 300;
  double lr = 0.05;
  double weight_decay = 1e-4;
};

struct TrainConfig {
  double base_lr = 1.5e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  /// Effective rate base_lr · batch_size / 256.
  bool lr_scaling = true;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t warmup_epochs = 1;
  /// Stops early when nonzero; the schedule still spans `epochs`.
  std::size_t max_steps = 0;
  std::size_t checkpoint_every = 0;
  /// 32 or 64 bit parameters.
  int precision = 32;
  /// Worker threads for per-image gradients; 0 reads LOMAR_THREADS.
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  LossScope loss_scope = LossScope::masked;
  std::size_t head_hidden = 64;
  bool mask_token = false;
  SamplerConfig sampler;
  EncoderConfig encoder;  // encoder.k always mirrors sampler.k
  DataConfig data;
  ProbeConfig probe;

  double peak_lr() const;
  std::size_t steps_per_epoch() const;
  std::size_t schedule_steps() const { return epochs * steps_per_epoch(); }
  std::size_t run_steps() const;
  ModelConfig model_config(std::size_t channels = 3) const;
};

/// Linear warmup 0 → peak over warmup_epochs, then half-cosine peak → 0 at
/// epochs · steps_per_epoch.
double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg);

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ParamList<T>& params);
};

/// One AdamW update from the gradients held by `params`. Decoupled decay
/// θ ← θ − lr·wd·θ applies only to parameters flagged `decay`. A missing
/// gradient counts as zero. Throws NumericError, leaving everything
/// untouched, if any gradient is non-finite.
template <typename T>
void adamw_step(const ParamList<T>& params, OptimizerState<T>& state, double lr, const TrainConfig& cfg);

/// Worker count from a request, LOMAR_THREADS and the hardware.
std::size_t resolve_threads(std::size_t requested);

/// Loss of one image: augment → patchify → n windows → mask → encode →
/// reconstruct → loss, averaged over windows. All randomness derives from
/// `image_seed`. `masked_targets` receives the number of masked patches.
template <typename T>
Tensor<T> image_loss(const Model<T>& model, const Image& image, const TrainConfig& cfg, std::uint64_t image_seed,
                     std::size_t* masked_targets = nullptr);

struct StepMetrics {
  std::size_t step = 0;  // 1-based count of completed steps
  double lr = 0.0;
  double loss = 0.0;
  std::size_t masked_targets = 0;
};

/// "step,lr,loss"
std::string format_metrics_line(const StepMetrics& m);

template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<Image> corpus);

  /// One optimizer step on the next batch.
  StepMetrics step();
  /// Runs until `run_steps()` or `steps` more steps, whichever is first.
  std::vector<StepMetrics> run(std::size_t steps, const std::function<void(const StepMetrics&)>& on_step = {});

  std::size_t steps_done() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  Model<T>& model() { return model_; }
  const Model<T>& model() const { return model_; }
  OptimizerState<T>& optimizer() { return opt_; }
  /// Corpus indices used at step `s` (0-based).
  std::vector<std::size_t> batch_indices(std::size_t s) const;

  Checkpoint to_checkpoint(const std::string& config_text);
  /// Restores weights, moments, RNG and step. The checkpoint must have been
  /// written for the same architecture.
  void restore(const Checkpoint& ckpt);

 private:
  TrainConfig cfg_;
  std::vector<Image> corpus_;
  Model<T> model_;
  OptimizerState<T> opt_;
  Rng rng_;
  std::size_t step_ = 0;
  std::size_t threads_ = 1;
};

/// Weights (and, with `opt`, Adam moments) as named checkpoint tensors.
template <typename T>
void store_model(Checkpoint& ckpt, Model<T>& model, const OptimizerState<T>* opt = nullptr);
/// Loads weights by name; with `opt` also the Adam moments.
template <typename T>
void load_model(const Checkpoint& ckpt, Model<T>& model, OptimizerState<T>* opt = nullptr);

}  // namespace lomar
