#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lomar/corpus.hpp"
#include "lomar/model.hpp"
#include "lomar/trainer.hpp"

namespace lomar {

/// Copy of the model with detached (non-trainable) parameters.
template <typename T>
Model<T> frozen(const Model<T>& model);

/// Window origins along one axis tiling [0, extent) with side k; the last
/// window is pulled back to end at the border when k does not divide extent.
std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t k);

/// Mean over grid patches of the unmasked encoder output, each patch first
/// averaged over the tiled windows that contain it.
template <typename T>
std::vector<double> pooled_features(const Model<T>& model, const Image& image, const DataConfig& data);

template <typename T>
std::vector<std::vector<double>> pooled_features(const Model<T>& model, const std::vector<Image>& images,
                                                 const DataConfig& data, std::size_t threads = 1);

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::size_t classes = 0;
};

/// Softmax regression (Adam, full batch, L2 penalty weight_decay/2·‖W‖²)
/// on standardized features with a seeded train/test split. Throws ContractError with fewer than two classes.
ProbeResult fit_linear_probe(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                             const ProbeConfig& cfg, std::uint64_t seed);

template <typename T>
ProbeResult linear_probe(const Model<T>& model, const std::vector<LabeledImage>& set, const DataConfig& data,
                         const ProbeConfig& cfg, std::uint64_t seed, std::size_t threads = 1);

struct SweepRow {
  double mask_ratio = 0.0;
  double final_loss = 0.0;
  double probe_accuracy = 0.0;
};

/// Pretrains one model per ratio for `steps` steps (same seed otherwise)
/// and probes each on `probe_set`.
template <typename T>
std::vector<SweepRow> mask_ratio_sweep(const TrainConfig& base, const std::vector<double>& ratios,
                                       const std::vector<Image>& corpus, const std::vector<LabeledImage>& probe_set,
                                       std::size_t steps);

/// Unlabeled pretraining images: every image under `data.dir` when set,
/// otherwise `data.corpus_size` synthetic images from `seed`.
std::vector<Image> training_images(const TrainConfig& cfg);

/// Labeled evaluation set: class subdirectories of `data.dir` when set,
/// otherwise `probe.samples` synthetic images drawn from a seed disjoint
/// from the pretraining corpus.
std::vector<LabeledImage> probe_images(const TrainConfig& cfg);

/// "mask_ratio,final_loss,probe_accuracy" header plus one row per ratio.
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace lomar
