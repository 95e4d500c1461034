#include "lomar/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "lomar/error.hpp"

namespace lomar {

namespace {

constexpr char kContainerMagic[4] = {'L', 'M', 'T', '1'};
constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
// Largest pixel count accepted from a file (4 GiB of f32).
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 30;

std::uint32_t read_u32(std::span<const std::byte> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint32_t>(bytes[offset + i]);
  return v;
}

void write_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return bytes;
}

}  // namespace

Image Image::filled(std::size_t height, std::size_t width, std::size_t channels, float value) {
  Image img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.pixels.assign(height * width * channels, value);
  return img;
}

void validate_image(const Image& image) {
  if (image.height == 0 || image.width == 0 || image.channels == 0) {
    throw IngestionError("image dimensions must be positive");
  }
  if (image.pixels.size() != image.height * image.width * image.channels) {
    throw IngestionError("pixel buffer does not match image dimensions");
  }
  for (float v : image.pixels) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw IngestionError("pixel value outside [0, 1]");
  }
}

Image decode_container(std::span<const std::byte> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kContainerMagic, 4) != 0) {
    throw IngestionError("bad container magic");
  }
  const std::uint32_t rank = read_u32(bytes, 4);
  if (rank != 2 && rank != 3) throw IngestionError("container rank must be 2 or 3, got " + std::to_string(rank));
  const std::size_t header = 8 + 4 * std::size_t{rank};
  if (bytes.size() < header) throw IngestionError("container truncated in header");
  std::uint64_t dims[3] = {0, 0, 1};
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    dims[i] = read_u32(bytes, 8 + 4 * i);
    if (dims[i] == 0) throw IngestionError("container has a zero dimension");
    count *= dims[i];
    if (count > kMaxElements) throw IngestionError("container dimensions overflow");
  }
  if (bytes.size() != header + 4 * count) {
    throw IngestionError("container payload is " + std::to_string(bytes.size() - header) + " bytes, expected " +
                         std::to_string(4 * count));
  }
  Image img;
  img.height = dims[0];
  img.width = dims[1];
  img.channels = dims[2];
  img.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) img.pixels[i] = std::bit_cast<float>(read_u32(bytes, header + 4 * i));
  validate_image(img);
  return img;
}

std::vector<std::byte> encode_container(const Image& image) {
  validate_image(image);
  std::vector<std::byte> out;
  out.reserve(20 + 4 * image.pixels.size());
  for (char c : kContainerMagic) out.push_back(static_cast<std::byte>(c));
  write_u32(out, 3);
  write_u32(out, static_cast<std::uint32_t>(image.height));
  write_u32(out, static_cast<std::uint32_t>(image.width));
  write_u32(out, static_cast<std::uint32_t>(image.channels));
  for (float v : image.pixels) write_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngMagic, 8) == 0) return load_png(path);
  return decode_container(bytes);
}

void save_container(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_container(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void save_png(const Image& image, const std::filesystem::path& path) {
  validate_image(image);
  if (image.channels != 1 && image.channels != 3) throw IoError("PNG output supports 1 or 3 channels");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(image.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<png_byte>(std::lround(image.pixels[i] * 255.0f));
  }
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

Image load_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw IngestionError("cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image img;
  img.height = png.height;
  img.width = png.width;
  img.channels = color ? 3 : 1;
  if (std::uint64_t{img.height} * img.width * img.channels > kMaxElements) {
    png_image_free(&png);
    throw IngestionError("PNG dimensions overflow");
  }
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IngestionError("cannot decode PNG " + path.string() + ": " + msg);
  }
  img.pixels.resize(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) img.pixels[i] = static_cast<float>(buffer[i]) / 255.0f;
  return img;
}

Image resize_bilinear(const Image& image, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ParameterError("resize target must be non-empty");
  Image out = Image::filled(out_h, out_w, image.channels);
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, double(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, double(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
        const double bottom = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
        out.at(y, x, c) = static_cast<float>(std::clamp(top * (1.0 - wy) + bottom * wy, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image crop(const Image& image, const CropRect& rect) {
  if (rect.height == 0 || rect.width == 0 || rect.top + rect.height > image.height ||
      rect.left + rect.width > image.width) {
    throw ParameterError("crop rectangle outside image");
  }
  Image out = Image::filled(rect.height, rect.width, image.channels);
  for (std::size_t y = 0; y < rect.height; ++y) {
    const float* src = &image.pixels[((rect.top + y) * image.width + rect.left) * image.channels];
    std::copy_n(src, rect.width * image.channels, &out.pixels[y * rect.width * image.channels]);
  }
  return out;
}

CropRect sample_crop(std::size_t height, std::size_t width, ScaleRange scale, Rng& rng) {
  if (!(scale.lo > 0.0) || !(scale.lo <= scale.hi) || !(scale.hi <= 1.0)) {
    throw ParameterError("scale range must satisfy 0 < lo <= hi <= 1");
  }
  const double area = static_cast<double>(height) * static_cast<double>(width);
  if (scale.lo * area < 1.0) throw ParameterError("scale range admits a sub-pixel crop");

  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  std::uniform_real_distribution<double> scale_dist(scale.lo, scale.hi);
  std::uniform_real_distribution<double> ratio_dist(log_lo, log_hi);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * scale_dist(rng);
    const double ratio = std::exp(ratio_dist(rng));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * ratio)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / ratio)));
    if (w >= 1 && h >= 1 && w <= width && h <= height) {
      const auto top = std::uniform_int_distribution<std::size_t>(0, height - h)(rng);
      const auto left = std::uniform_int_distribution<std::size_t>(0, width - w)(rng);
      return {top, left, h, w};
    }
  }
  // Fallback: centered crop with the aspect ratio clamped into range.
  const double in_ratio = static_cast<double>(width) / static_cast<double>(height);
  std::size_t w = width, h = height;
  if (in_ratio < 3.0 / 4.0) {
    h = static_cast<std::size_t>(std::lround(static_cast<double>(w) / (3.0 / 4.0)));
  } else if (in_ratio > 4.0 / 3.0) {
    w = static_cast<std::size_t>(std::lround(static_cast<double>(h) * (4.0 / 3.0)));
  }
  return {(height - h) / 2, (width - w) / 2, h, w};
}

Image random_resized_crop(const Image& image, std::size_t out_size, ScaleRange scale, Rng& rng) {
  validate_image(image);
  if (out_size == 0) throw ParameterError("out_size must be positive");
  const CropRect rect = sample_crop(image.height, image.width, scale, rng);
  return resize_bilinear(crop(image, rect), out_size, out_size);
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c) out.at(y, image.width - 1 - x, c) = image.at(y, x, c);
  return out;
}

}  // namespace lomar
