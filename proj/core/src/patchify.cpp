#include "lomar/patchify.hpp"

#include <cmath>
#include <string>

#include "lomar/error.hpp"
#include "lomar/ops.hpp"

namespace lomar {

std::vector<double> normalize_patch(std::span<const double> pixels, double eps) {
  double mu = 0.0;
  for (double v : pixels) mu += v;
  mu /= static_cast<double>(pixels.size());
  double var = 0.0;
  for (double v : pixels) var += (v - mu) * (v - mu);
  var /= static_cast<double>(pixels.size());
  const double sd = std::sqrt(var + eps);
  std::vector<double> out(pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (pixels[i] - mu) / sd;
  return out;
}

PatchGrid patchify(const Image& image, std::size_t patch_size, TargetNorm norm) {
  validate_image(image);
  if (patch_size == 0) throw DimensionError("patch_size must be positive");
  if (image.height % patch_size != 0 || image.width % patch_size != 0) {
    throw DimensionError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         " is not divisible by patch size " + std::to_string(patch_size));
  }
  PatchGrid grid;
  grid.grid_h = image.height / patch_size;
  grid.grid_w = image.width / patch_size;
  grid.patch_size = patch_size;
  grid.channels = image.channels;
  grid.patch_dim = patch_size * patch_size * image.channels;
  grid.norm = norm;
  const std::size_t n = grid.num_patches(), dim = grid.patch_dim, ch = image.channels;
  grid.patches.resize(n * dim);
  grid.normalized_targets.resize(n * dim);
  const std::size_t groups = norm == TargetNorm::joint ? 1 : ch;
  grid.mean.resize(n * groups);
  grid.stddev.resize(n * groups);

  for (std::size_t i = 0; i < n; ++i) {
    const GridCoord c = grid.coord(i);
    double* dst = grid.patches.data() + i * dim;
    for (std::size_t py = 0; py < patch_size; ++py) {
      for (std::size_t px = 0; px < patch_size; ++px) {
        for (std::size_t k = 0; k < ch; ++k) {
          dst[(py * patch_size + px) * ch + k] = image.at(c.row * patch_size + py, c.col * patch_size + px, k);
        }
      }
    }
    for (std::size_t g = 0; g < groups; ++g) {
      // Elements of group g: every value (joint) or every ch-th value.
      const std::size_t stride = groups == 1 ? 1 : ch;
      const std::size_t count = dim / stride;
      double mu = 0.0;
      for (std::size_t j = 0; j < count; ++j) mu += dst[g + j * stride];
      mu /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t j = 0; j < count; ++j) var += (dst[g + j * stride] - mu) * (dst[g + j * stride] - mu);
      var /= static_cast<double>(count);
      const double sd = std::sqrt(var + kTargetEps);
      grid.mean[i * groups + g] = mu;
      grid.stddev[i * groups + g] = sd;
      double* tgt = grid.normalized_targets.data() + i * dim;
      for (std::size_t j = 0; j < count; ++j) tgt[g + j * stride] = (dst[g + j * stride] - mu) / sd;
    }
  }
  return grid;
}

Image unpatchify(const PatchGrid& grid) {
  const std::size_t p = grid.patch_size, ch = grid.channels;
  Image img = Image::filled(grid.grid_h * p, grid.grid_w * p, ch);
  for (std::size_t i = 0; i < grid.num_patches(); ++i) {
    const GridCoord c = grid.coord(i);
    const auto src = grid.patch(i);
    for (std::size_t py = 0; py < p; ++py) {
      for (std::size_t px = 0; px < p; ++px) {
        for (std::size_t k = 0; k < ch; ++k) {
          img.at(c.row * p + py, c.col * p + px, k) = static_cast<float>(src[(py * p + px) * ch + k]);
        }
      }
    }
  }
  return img;
}

template <typename T>
Tensor<T> trunc_normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> values(shape_size(shape));
  for (auto& v : values) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    v = static_cast<T>(z * stddev);
  }
  return Tensor<T>::from(std::move(shape), std::move(values), true);
}

template <typename T>
PatchEmbedWeights<T> PatchEmbedWeights<T>::init(std::size_t patch_dim, std::size_t embed_dim, Rng& rng) {
  return {trunc_normal<T>({patch_dim, embed_dim}, 0.02, rng), Tensor<T>::zeros({embed_dim}, true)};
}

template <typename T>
Tensor<T> patch_matrix(const PatchGrid& grid) {
  return Tensor<T>::from({grid.num_patches(), grid.patch_dim},
                         std::vector<T>(grid.patches.begin(), grid.patches.end()));
}

template <typename T>
Tensor<T> embed_patches(const PatchGrid& grid, const PatchEmbedWeights<T>& weights) {
  if (weights.patch_dim() != grid.patch_dim) {
    throw DimensionError("patch embedding expects patch_dim " + std::to_string(weights.patch_dim()) + ", got " +
                         std::to_string(grid.patch_dim));
  }
  return ops::add_bias(ops::matmul(patch_matrix<T>(grid), weights.projection), weights.bias);
}

template struct PatchEmbedWeights<float>;
template struct PatchEmbedWeights<double>;
template Tensor<float> trunc_normal<float>(Shape, double, Rng&);
template Tensor<double> trunc_normal<double>(Shape, double, Rng&);
template Tensor<float> patch_matrix<float>(const PatchGrid&);
template Tensor<double> patch_matrix<double>(const PatchGrid&);
template Tensor<float> embed_patches<float>(const PatchGrid&, const PatchEmbedWeights<float>&);
template Tensor<double> embed_patches<double>(const PatchGrid&, const PatchEmbedWeights<double>&);

}  // namespace lomar
