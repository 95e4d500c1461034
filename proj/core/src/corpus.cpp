#include "lomar/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "lomar/error.hpp"

namespace lomar {

namespace {

using Rgb = std::array<float, 3>;

constexpr std::array<const char*, kSyntheticClasses> kClassNames = {
    "disk", "square", "triangle", "ring", "plus", "diamond", "cross", "bars", "frame", "half_disk"};

// Shape membership in coordinates normalized by the shape radius.
bool inside(int label, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  const double rho = std::hypot(u, v);
  switch (label) {
    case 0: return rho < 1.0;
    case 1: return std::max(au, av) < 0.8;
    case 2: return v < 0.8 && au < 0.55 * (v + 0.9);
    case 3: return rho < 1.0 && rho > 0.55;
    case 4: return (au < 0.3 && av < 0.95) || (av < 0.3 && au < 0.95);
    case 5: return au + av < 1.0;
    case 6: return std::max(au, av) < 0.85 && (std::abs(u - v) < 0.4 || std::abs(u + v) < 0.4);
    case 7: return au < 0.9 && (std::abs(v - 0.5) < 0.22 || std::abs(v + 0.5) < 0.22);
    case 8: return std::max(au, av) < 0.9 && std::max(au, av) > 0.5;
    case 9: return rho < 1.0 && v > -0.1;
    default: throw ParameterError("synthetic class out of range: " + std::to_string(label));
  }
}

Rgb random_color(Rng& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  return {u(rng), u(rng), u(rng)};
}

float distance(const Rgb& a, const Rgb& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".lmt";
}

Image load_resized(const std::filesystem::path& path, std::size_t size) {
  Image img = load_image(path);
  if (img.channels == 1) {
    Image rgb = Image::filled(img.height, img.width, 3);
    for (std::size_t i = 0; i < img.height * img.width; ++i)
      for (std::size_t c = 0; c < 3; ++c) rgb.pixels[i * 3 + c] = img.pixels[i];
    img = std::move(rgb);
  }
  if (img.height != size || img.width != size) img = resize_bilinear(img, size, size);
  return img;
}

}  // namespace

const char* synthetic_class_name(int label) {
  if (label < 0 || label >= static_cast<int>(kSyntheticClasses)) return "unknown";
  return kClassNames[static_cast<std::size_t>(label)];
}

Image synthetic_image(int label, std::size_t size, Rng& rng, const SyntheticStyle& style) {
  if (size < 16) throw ParameterError("synthetic images need at least 16 pixels per side");
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Background: sinusoidal stripes, axis-aligned or diagonal, period 4 or 8
  // pixels so that the texture repeats with the default 8-pixel patch.
  static constexpr int kDirs[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  const auto& dir = kDirs[rng() % 4];
  const double period = (rng() % 2) ? 8.0 : 4.0;
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  // Grey stripes of fixed contrast; only the brightness varies.
  const float base = static_cast<float>(0.1 + 0.3 * unit(rng));
  const Rgb bg0{base, base, base};
  const float top = base + static_cast<float>(style.stripe_contrast);
  const Rgb bg1{top, top, top};
  if (!(style.min_radius >= 0.0 && style.min_radius <= style.max_radius && style.max_radius <= 0.5)) {
    throw ParameterError("synthetic shape radius range must satisfy 0 <= min <= max <= 0.5");
  }
  if (!(style.stripe_contrast >= 0.0 && style.stripe_contrast <= 0.5)) {
    throw ParameterError("stripe contrast must be in [0, 0.5]");
  }
  if (style.min_instances > style.max_instances) throw ParameterError("instance range is empty");

  Image img = Image::filled(size, size, 3);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double w =
          0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (dir[0] * double(x) + dir[1] * double(y)) / period + phase);
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(bg0[c] * (1.0 - w) + bg1[c] * w);
    }
  }

  const double s = static_cast<double>(size);
  const std::size_t instances =
      style.min_instances + static_cast<std::size_t>(rng() % (style.max_instances - style.min_instances + 1));
  for (std::size_t n = 0; n < instances && style.max_radius > 0.0; ++n) {
    Rgb fg = random_color(rng);
    for (int tries = 0; tries < 32 && std::min(distance(fg, bg0), distance(fg, bg1)) < 0.35f; ++tries) {
      fg = random_color(rng);
    }
    const double radius = s * (style.min_radius + (style.max_radius - style.min_radius) * unit(rng));
    const double cy = radius + (s - 2 * radius) * unit(rng);
    const double cx = radius + (s - 2 * radius) * unit(rng);
    const auto lo = [&](double c) { return static_cast<std::size_t>(std::max(0.0, std::floor(c - radius - 1))); };
    const auto hi = [&](double c) { return static_cast<std::size_t>(std::min(s, std::ceil(c + radius + 1))); };
    for (std::size_t y = lo(cy); y < hi(cy); ++y) {
      for (std::size_t x = lo(cx); x < hi(cx); ++x) {
        // 2×2 supersampling for the shape edge.
        int hits = 0;
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx)
            hits += inside(label, (double(x) + 0.25 + 0.5 * sx - cx) / radius, (double(y) + 0.25 + 0.5 * sy - cy) / radius);
        const float cover = static_cast<float>(hits) / 4.0f;
        for (std::size_t c = 0; c < 3; ++c) {
          img.at(y, x, c) = std::clamp(img.at(y, x, c) * (1.0f - cover) + fg[c] * cover, 0.0f, 1.0f);
        }
      }
    }
  }
  return img;
}

std::vector<LabeledImage> synthetic_corpus(std::size_t count, std::size_t size, std::size_t num_classes,
                                           std::uint64_t seed, const SyntheticStyle& style) {
  if (num_classes == 0 || num_classes > kSyntheticClasses) {
    throw ParameterError("synthetic corpus supports 1 to 10 classes");
  }
  std::vector<LabeledImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(stream_seed(purpose_seed(seed, Purpose::corpus), i));
    const int label = static_cast<int>(i % num_classes);
    out.push_back({synthetic_image(label, size, rng, style), label});
  }
  return out;
}

std::vector<LabeledImage> load_labeled_dir(const std::filesystem::path& root, std::size_t size,
                                           std::vector<std::string>* class_names) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IngestionError("not a directory: " + root.string());
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) classes.push_back(e.path());
  }
  std::sort(classes.begin(), classes.end());
  std::vector<LabeledImage> out;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[c])) {
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back({load_resized(f, size), static_cast<int>(c)});
    if (class_names) class_names->push_back(classes[c].filename().string());
  }
  if (out.empty()) throw IngestionError("no images found under " + root.string());
  return out;
}

std::vector<Image> load_image_dir(const std::filesystem::path& root, std::size_t size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IngestionError("not a directory: " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  for (const auto& f : files) out.push_back(load_resized(f, size));
  if (out.empty()) throw IngestionError("no images found under " + root.string());
  return out;
}

std::vector<Image> images_of(const std::vector<LabeledImage>& set) {
  std::vector<Image> out;
  out.reserve(set.size());
  for (const auto& s : set) out.push_back(s.image);
  return out;
}

}  // namespace lomar
