#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "lomar/rng.hpp"

namespace lomar {

/// Interleaved (HWC) image with pixel values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> pixels;

  static Image filled(std::size_t height, std::size_t width, std::size_t channels, float value = 0.0f);

  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
};

/// Throws IngestionError unless dimensions are positive, the buffer matches
/// and every pixel is a finite value in [0, 1].
void validate_image(const Image& image);

/// Raw tensor container: "LMT1", u32 LE rank (2 or 3), u32 LE dims
/// (H, W[, C]), then H·W·C little-endian f32 pixels.
Image decode_container(std::span<const std::byte> bytes);
std::vector<std::byte> encode_container(const Image& image);

/// Loads a container or an 8-bit PNG (detected by magic bytes).
Image load_image(const std::filesystem::path& path);
void save_container(const Image& image, const std::filesystem::path& path);
/// 8-bit PNG; gray for one channel, RGB for three.
void save_png(const Image& image, const std::filesystem::path& path);
Image load_png(const std::filesystem::path& path);

/// Bilinear resample (half-pixel centers) to out_h × out_w.
Image resize_bilinear(const Image& image, std::size_t out_h, std::size_t out_w);

struct CropRect {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct ScaleRange {
  double lo = 0.2;
  double hi = 1.0;
};

/// Crop rectangle with area fraction in `scale` and aspect ratio
/// log-uniform in [3/4, 4/3]; falls back to the largest centered crop
/// after ten rejected draws. Throws ParameterError on an invalid range or
/// one whose smallest crop is under a pixel.
CropRect sample_crop(std::size_t height, std::size_t width, ScaleRange scale, Rng& rng);

/// Random-resized crop to out_size × out_size.
Image random_resized_crop(const Image& image, std::size_t out_size, ScaleRange scale, Rng& rng);

Image crop(const Image& image, const CropRect& rect);

Image flip_horizontal(const Image& image);

}  // namespace lomar
