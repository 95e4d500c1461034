#include "lomar/encoder.hpp"

#include <cmath>
#include <string>

#include "lomar/error.hpp"
#include "lomar/ops.hpp"
#include "lomar/patchify.hpp"

namespace lomar {

std::size_t EncoderConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(mlp_ratio * static_cast<double>(embed_dim)));
}

void EncoderConfig::validate() const {
  if (embed_dim == 0 || num_heads == 0) throw DimensionError("embed_dim and num_heads must be positive");
  if (embed_dim % num_heads != 0) {
    throw DimensionError("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                         std::to_string(num_heads));
  }
  if (k == 0) throw DimensionError("window side k must be positive");
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) throw DimensionError("mlp_ratio must give a positive hidden width");
  if (!(ln_eps > 0.0)) throw DimensionError("ln_eps must be positive");
}

template <typename T>
RpeTable<T> RpeTable<T>::zeros(std::size_t k, std::size_t num_heads, std::size_t head_dim) {
  RpeTable table;
  table.k = k;
  for (std::size_t h = 0; h < num_heads; ++h) {
    table.heads.push_back(Tensor<T>::zeros({table.entries(), head_dim}, true));
  }
  return table;
}

template <typename T>
std::size_t RpeTable<T>::offset_index(long drow, long dcol) const {
  const long span = static_cast<long>(k) - 1;
  if (drow < -span || drow > span || dcol < -span || dcol > span) {
    throw ContractError("relative offset (" + std::to_string(drow) + "," + std::to_string(dcol) +
                        ") outside RPE table for k=" + std::to_string(k));
  }
  return static_cast<std::size_t>((drow + span) * (2 * span + 1) + (dcol + span));
}

std::vector<std::size_t> rpe_offset_index(std::size_t k) {
  const std::size_t t = k * k;
  const std::size_t side = 2 * k - 1;
  std::vector<std::size_t> idx(t * t);
  for (std::size_t i = 0; i < t; ++i) {
    const std::size_t ri = i / k, ci = i % k;
    for (std::size_t j = 0; j < t; ++j) {
      const std::size_t rj = j / k, cj = j % k;
      // (rj - ri + k - 1) and (cj - ci + k - 1) are both in [0, 2k-2].
      idx[i * t + j] = (rj + k - 1 - ri) * side + (cj + k - 1 - ci);
    }
  }
  return idx;
}

template <typename T>
BlockWeights<T> BlockWeights<T>::init(const EncoderConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.embed_dim, hidden = cfg.mlp_hidden();
  BlockWeights b;
  b.ln1_gamma = Tensor<T>::full({d}, T(1), true);
  b.ln1_beta = Tensor<T>::zeros({d}, true);
  b.wq = trunc_normal<T>({d, d}, 0.02, rng);
  b.bq = Tensor<T>::zeros({d}, true);
  b.wk = trunc_normal<T>({d, d}, 0.02, rng);
  b.bk = Tensor<T>::zeros({d}, true);
  b.wv = trunc_normal<T>({d, d}, 0.02, rng);
  b.bv = Tensor<T>::zeros({d}, true);
  b.wo = trunc_normal<T>({d, d}, 0.02, rng);
  b.bo = Tensor<T>::zeros({d}, true);
  b.ln2_gamma = Tensor<T>::full({d}, T(1), true);
  b.ln2_beta = Tensor<T>::zeros({d}, true);
  b.w1 = trunc_normal<T>({d, hidden}, 0.02, rng);
  b.b1 = Tensor<T>::zeros({hidden}, true);
  b.w2 = trunc_normal<T>({hidden, d}, 0.02, rng);
  b.b2 = Tensor<T>::zeros({d}, true);
  return b;
}

template <typename T>
EncoderWeights<T> EncoderWeights<T>::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderWeights w;
  w.config = cfg;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) w.blocks.push_back(BlockWeights<T>::init(cfg, rng));
  w.rpe = RpeTable<T>::zeros(cfg.k, cfg.num_heads, cfg.head_dim());
  if (cfg.per_layer_rpe) {
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      w.layer_rpe.push_back(RpeTable<T>::zeros(cfg.k, cfg.num_heads, cfg.head_dim()));
    }
  }
  w.final_gamma = Tensor<T>::full({cfg.embed_dim}, T(1), true);
  w.final_beta = Tensor<T>::zeros({cfg.embed_dim}, true);
  return w;
}

template <typename T>
const RpeTable<T>& EncoderWeights<T>::rpe_for(std::size_t layer) const {
  return config.per_layer_rpe ? layer_rpe.at(layer) : rpe;
}

template <typename T>
void EncoderWeights<T>::collect(ParamList<T>& out, const std::string& prefix) {
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    auto& b = blocks[l];
    const std::string p = prefix + "blocks." + std::to_string(l) + ".";
    out.push_back({p + "ln1.gamma", &b.ln1_gamma, false});
    out.push_back({p + "ln1.beta", &b.ln1_beta, false});
    out.push_back({p + "attn.wq", &b.wq, true});
    out.push_back({p + "attn.bq", &b.bq, false});
    out.push_back({p + "attn.wk", &b.wk, true});
    out.push_back({p + "attn.bk", &b.bk, false});
    out.push_back({p + "attn.wv", &b.wv, true});
    out.push_back({p + "attn.bv", &b.bv, false});
    out.push_back({p + "attn.wo", &b.wo, true});
    out.push_back({p + "attn.bo", &b.bo, false});
    out.push_back({p + "ln2.gamma", &b.ln2_gamma, false});
    out.push_back({p + "ln2.beta", &b.ln2_beta, false});
    out.push_back({p + "mlp.w1", &b.w1, true});
    out.push_back({p + "mlp.b1", &b.b1, false});
    out.push_back({p + "mlp.w2", &b.w2, true});
    out.push_back({p + "mlp.b2", &b.b2, false});
  }
  for (std::size_t h = 0; h < rpe.heads.size(); ++h) {
    out.push_back({prefix + "rpe.head" + std::to_string(h), &rpe.heads[h], false});
  }
  for (std::size_t l = 0; l < layer_rpe.size(); ++l) {
    for (std::size_t h = 0; h < layer_rpe[l].heads.size(); ++h) {
      out.push_back({prefix + "blocks." + std::to_string(l) + ".rpe.head" + std::to_string(h),
                     &layer_rpe[l].heads[h], false});
    }
  }
  out.push_back({prefix + "norm.gamma", &final_gamma, false});
  out.push_back({prefix + "norm.beta", &final_beta, false});
}

template <typename T>
Tensor<T> rpe_bias(const Tensor<T>& q, const Tensor<T>& table, const std::vector<std::size_t>& offsets) {
  const std::size_t t = q.rows();
  if (offsets.size() != t * t) throw DimensionError("rpe_bias: offset matrix must be t×t");
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(q.cols()));
  return ops::scale(ops::gather_in_rows<T>(ops::matmul_nt(q, table), offsets, t), inv_sqrt);
}

template <typename T>
Tensor<T> attention(const Tensor<T>& x, const BlockWeights<T>& block, const RpeTable<T>& table,
                    std::vector<std::vector<double>>* trace) {
  const std::size_t t = x.rows(), d = x.cols();
  const std::size_t heads = table.heads.size();
  if (heads == 0 || d % heads != 0) throw DimensionError("attention: embed_dim not divisible by heads");
  if (t != table.k * table.k) {
    throw DimensionError("attention: " + std::to_string(t) + " tokens for a " + std::to_string(table.k) + "x" +
                         std::to_string(table.k) + " window");
  }
  const std::size_t hd = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
  const auto offsets = rpe_offset_index(table.k);

  const auto q = ops::add_bias(ops::matmul(x, block.wq), block.bq);
  const auto k = ops::add_bias(ops::matmul(x, block.wk), block.bk);
  const auto v = ops::add_bias(ops::matmul(x, block.wv), block.bv);
  std::vector<Tensor<T>> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = ops::slice_cols(q, h * hd, hd);
    const auto kh = ops::slice_cols(k, h * hd, hd);
    const auto vh = ops::slice_cols(v, h * hd, hd);
    const auto content = ops::scale(ops::matmul_nt(qh, kh), inv_sqrt);
    const auto probs = ops::softmax_rows(ops::add(content, rpe_bias(qh, table.heads[h], offsets)));
    if (trace) trace->emplace_back(probs.values().begin(), probs.values().end());
    outputs.push_back(ops::matmul(probs, vh));
  }
  const auto merged = heads == 1 ? outputs.front() : ops::concat_cols(outputs);
  return ops::add_bias(ops::matmul(merged, block.wo), block.bo);
}

template <typename T>
Tensor<T> encoder_forward(const Tensor<T>& tokens, const EncoderWeights<T>& weights, AttentionTrace* trace) {
  const auto& cfg = weights.config;
  if (tokens.rank() != 2 || tokens.rows() != cfg.tokens() || tokens.cols() != cfg.embed_dim) {
    throw DimensionError("encoder expects " + std::to_string(cfg.tokens()) + "x" + std::to_string(cfg.embed_dim) +
                         " tokens, got " + shape_string(tokens.shape()));
  }
  if (weights.blocks.size() != cfg.num_layers) throw DimensionError("encoder weights do not match num_layers");
  const T eps = static_cast<T>(cfg.ln_eps);
  if (trace) trace->probs.clear();
  Tensor<T> x = tokens;
  for (std::size_t l = 0; l < weights.blocks.size(); ++l) {
    const auto& b = weights.blocks[l];
    std::vector<std::vector<double>>* layer_trace = nullptr;
    if (trace) layer_trace = &trace->probs.emplace_back();
    x = ops::add(x, attention(ops::layer_norm(x, b.ln1_gamma, b.ln1_beta, eps), b, weights.rpe_for(l), layer_trace));
    const auto h = ops::gelu(ops::add_bias(ops::matmul(ops::layer_norm(x, b.ln2_gamma, b.ln2_beta, eps), b.w1), b.b1));
    x = ops::add(x, ops::add_bias(ops::matmul(h, b.w2), b.b2));
  }
  return ops::layer_norm(x, weights.final_gamma, weights.final_beta, eps);
}

template struct RpeTable<float>;
template struct RpeTable<double>;
template struct BlockWeights<float>;
template struct BlockWeights<double>;
template struct EncoderWeights<float>;
template struct EncoderWeights<double>;
template Tensor<float> rpe_bias<float>(const Tensor<float>&, const Tensor<float>&, const std::vector<std::size_t>&);
template Tensor<double> rpe_bias<double>(const Tensor<double>&, const Tensor<double>&,
                                         const std::vector<std::size_t>&);
template Tensor<float> attention<float>(const Tensor<float>&, const BlockWeights<float>&, const RpeTable<float>&,
                                        std::vector<std::vector<double>>*);
template Tensor<double> attention<double>(const Tensor<double>&, const BlockWeights<double>&,
                                          const RpeTable<double>&, std::vector<std::vector<double>>*);
template Tensor<float> encoder_forward<float>(const Tensor<float>&, const EncoderWeights<float>&, AttentionTrace*);
template Tensor<double> encoder_forward<double>(const Tensor<double>&, const EncoderWeights<double>&,
                                                AttentionTrace*);

}  // namespace lomar
