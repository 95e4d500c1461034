#include "lomar/model.hpp"

#include "lomar/error.hpp"
#include "lomar/ops.hpp"

namespace lomar {

template <typename T>
Model<T> Model<T>::init(const ModelConfig& cfg, Rng& rng) {
  cfg.encoder.validate();
  if (cfg.patch_dim == 0) throw DimensionError("patch_dim must be positive");
  if (!(cfg.pixel_std > 0.0)) throw ParameterError("pixel_std must be positive");
  Model m;
  m.config = cfg;
  m.embed = PatchEmbedWeights<T>::init(cfg.patch_dim, cfg.encoder.embed_dim, rng);
  m.encoder = EncoderWeights<T>::init(cfg.encoder, rng);
  m.head = HeadWeights<T>::init(cfg.encoder.embed_dim, cfg.head_hidden, cfg.patch_dim, rng);
  if (cfg.mask_token) m.mask_token = trunc_normal<T>({cfg.encoder.embed_dim}, 0.02, rng);
  return m;
}

template <typename T>
ParamList<T> Model<T>::params() {
  ParamList<T> out{{"embed.proj", &embed.projection, true}, {"embed.bias", &embed.bias, false}};
  if (config.mask_token) out.push_back({"mask_token", &mask_token, false});
  encoder.collect(out);
  head.collect(out);
  return out;
}

template <typename T>
Model<T> Model<T>::shadow() const {
  Model copy = *this;
  for (auto& p : copy.params()) *p.tensor = p.tensor->shadow();
  return copy;
}

template <typename T>
std::size_t Model<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : params()) n += p.tensor->size();
  return n;
}

template <typename T>
WindowPass<T> window_forward(const Model<T>& model, const PatchGrid& grid, const WindowSpec& spec,
                             const MaskPlan& plan, AttentionTrace* trace) {
  check_window(spec, grid.grid_h, grid.grid_w);
  if (plan.k != spec.k) throw DimensionError("mask plan and window disagree on k");
  if (grid.patch_dim != model.config.patch_dim) {
    throw DimensionError("image patches have " + std::to_string(grid.patch_dim) + " values, model expects " +
                         std::to_string(model.config.patch_dim));
  }
  const std::size_t t = spec.k * spec.k, pd = grid.patch_dim;
  WindowPass<T> pass;
  pass.patch_index = window_indices(spec, grid.grid_w);
  std::vector<T> raw(t * pd), tgt(t * pd);
  for (std::size_t j = 0; j < t; ++j) {
    const auto p = grid.patch(pass.patch_index[j]);
    const auto q = grid.target(pass.patch_index[j]);
    for (std::size_t c = 0; c < pd; ++c) {
      raw[j * pd + c] = static_cast<T>((p[c] - model.config.pixel_mean) / model.config.pixel_std);
      tgt[j * pd + c] = static_cast<T>(q[c]);
    }
  }
  pass.targets = Tensor<T>::from({t, pd}, std::move(tgt));
  const auto emb = ops::add_bias(ops::matmul(Tensor<T>::from({t, pd}, std::move(raw)), model.embed.projection),
                                 model.embed.bias);
  pass.tokens = plan.masked.empty() ? emb : ops::replace_rows(emb, plan.mask_vector(), model.masked_row());
  pass.latents = encoder_forward(pass.tokens, model.encoder, trace);
  pass.preds = reconstruct(pass.latents, model.head);
  return pass;
}

template struct Model<float>;
template struct Model<double>;
template WindowPass<float> window_forward<float>(const Model<float>&, const PatchGrid&, const WindowSpec&,
                                                 const MaskPlan&, AttentionTrace*);
template WindowPass<double> window_forward<double>(const Model<double>&, const PatchGrid&, const WindowSpec&,
                                                   const MaskPlan&, AttentionTrace*);

}  // namespace lomar
