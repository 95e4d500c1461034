#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lomar/params.hpp"
#include "lomar/rng.hpp"
#include "lomar/tensor.hpp"

namespace lomar {

struct EncoderConfig {
  std::size_t embed_dim = 64;
  std::size_t num_heads = 4;
  std::size_t num_layers = 4;
  double mlp_ratio = 4.0;
  std::size_t k = 7;
  /// One relative-position table per layer instead of one shared table.
  bool per_layer_rpe = false;
  double ln_eps = 1e-6;

  std::size_t head_dim() const { return embed_dim / num_heads; }
  std::size_t mlp_hidden() const;
  std::size_t tokens() const { return k * k; }
  /// Throws DimensionError on inconsistent settings.
  void validate() const;
};

/// Learnable relative-position vectors, one (2k−1)² × head_dim matrix per
/// head. Row (Δrow + k − 1)·(2k − 1) + (Δcol + k − 1) holds the vector for
/// key-minus-query offset (Δrow, Δcol).
template <typename T>
struct RpeTable {
  std::size_t k = 1;
  std::vector<Tensor<T>> heads;

  static RpeTable zeros(std::size_t k, std::size_t num_heads, std::size_t head_dim);
  std::size_t entries() const { return (2 * k - 1) * (2 * k - 1); }
  /// Throws ContractError when |Δ| ≥ k on either axis.
  std::size_t offset_index(long drow, long dcol) const;
};

/// t×t table of RPE rows for every (query, key) pair of a k×k window in
/// raster order.
std::vector<std::size_t> rpe_offset_index(std::size_t k);

template <typename T>
struct BlockWeights {
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> w1, b1, w2, b2;

  static BlockWeights init(const EncoderConfig& cfg, Rng& rng);
};

template <typename T>
struct EncoderWeights {
  EncoderConfig config;
  std::vector<BlockWeights<T>> blocks;
  RpeTable<T> rpe;                     // shared across layers
  std::vector<RpeTable<T>> layer_rpe;  // used when config.per_layer_rpe
  Tensor<T> final_gamma, final_beta;

  /// Truncated-normal(0.02) matrices, zero biases and RPE, unit LN gains.
  static EncoderWeights init(const EncoderConfig& cfg, Rng& rng);
  const RpeTable<T>& rpe_for(std::size_t layer) const;
  void collect(ParamList<T>& out, const std::string& prefix = "encoder.");
};

/// Post-softmax attention captured during a forward pass:
/// probs[layer][head] is a row-major t×t matrix.
struct AttentionTrace {
  std::vector<std::vector<std::vector<double>>> probs;
};

/// ⟨Q[i], r(offset(i,j))⟩ / √head_dim for one head.
template <typename T>
Tensor<T> rpe_bias(const Tensor<T>& q, const Tensor<T>& table, const std::vector<std::size_t>& offsets);

/// Multi-head self-attention with contextual relative-position bias:
/// per head softmax(QKᵀ/√dh + rpe_bias)·V, heads concatenated then ·Wo + bo.
template <typename T>
Tensor<T> attention(const Tensor<T>& x, const BlockWeights<T>& block, const RpeTable<T>& table,
                    std::vector<std::vector<double>>* trace = nullptr);

/// L pre-norm blocks followed by a final LayerNorm; shape preserved.
template <typename T>
Tensor<T> encoder_forward(const Tensor<T>& tokens, const EncoderWeights<T>& weights,
                          AttentionTrace* trace = nullptr);

}  // namespace lomar
