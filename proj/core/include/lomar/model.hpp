#pragma once

#include <cstddef>
#include <vector>

#include "lomar/encoder.hpp"
#include "lomar/head_loss.hpp"
#include "lomar/params.hpp"
#include "lomar/patchify.hpp"
#include "lomar/rng.hpp"
#include "lomar/sampler.hpp"

namespace lomar {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t patch_dim = 192;
  /// Hidden width of the reconstruction head; 0 selects a single linear layer.
  std::size_t head_hidden = 64;
  /// Learnable mask embedding instead of the projection bias.
  bool mask_token = false;
  /// Encoder inputs are (pixel − pixel_mean) / pixel_std.
  double pixel_mean = 0.5;
  double pixel_std = 0.25;
};

template <typename T>
struct Model {
  ModelConfig config;
  PatchEmbedWeights<T> embed;
  EncoderWeights<T> encoder;
  HeadWeights<T> head;
  Tensor<T> mask_token;  // undefined unless config.mask_token

  static Model init(const ModelConfig& cfg, Rng& rng);

  /// Every trainable tensor in a fixed order with stable names.
  ParamList<T> params();
  /// Copy whose leaves alias this model's values but own their gradients.
  Model shadow() const;
  /// Row substituted for masked tokens.
  const Tensor<T>& masked_row() const { return config.mask_token ? mask_token : embed.bias; }
  std::size_t parameter_count();
};

/// Intermediate tensors of one window's forward pass.
template <typename T>
struct WindowPass {
  Tensor<T> tokens;   // k² × d, masked rows substituted
  Tensor<T> latents;  // encoder output
  Tensor<T> preds;    // k² × patch_dim
  Tensor<T> targets;  // normalized targets, constant
  std::vector<std::size_t> patch_index;
};

/// Standardizes and embeds only the window's patches, then masks, encodes
/// and reconstructs. Masked rows hold `masked_row()`.
template <typename T>
WindowPass<T> window_forward(const Model<T>& model, const PatchGrid& grid, const WindowSpec& spec,
                             const MaskPlan& plan, AttentionTrace* trace = nullptr);

}  // namespace lomar
