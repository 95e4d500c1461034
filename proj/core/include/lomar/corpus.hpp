#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lomar/image.hpp"

namespace lomar {

struct LabeledImage {
  Image image;
  int label = 0;
};

inline constexpr std::size_t kSyntheticClasses = 10;

/// Name of synthetic shape class `label`.
const char* synthetic_class_name(int label);

/// Shape radius range as a fraction of the image side. A zero maximum
/// leaves only the background.
struct SyntheticStyle {
  double min_radius = 0.19;
  double max_radius = 0.34;
  /// Brightness difference between the two stripe levels.
  double stripe_contrast = 0.5;
  /// Number of shapes per image, drawn uniformly from the range.
  std::size_t min_instances = 1;
  std::size_t max_instances = 1;
};

/// RGB image of one or more shapes of class `label`, each at a random
/// position, size and colour, over a striped background.
Image synthetic_image(int label, std::size_t size, Rng& rng, const SyntheticStyle& style = {});

/// `count` images with labels cycling through `num_classes` (≤ 10) shape
/// classes. Fully determined by `seed`.
std::vector<LabeledImage> synthetic_corpus(std::size_t count, std::size_t size, std::size_t num_classes,
                                           std::uint64_t seed, const SyntheticStyle& style = {});

/// Images under `root/<class>/`, one label per subdirectory in sorted name
/// order, each resized to size × size. Throws IngestionError when nothing
/// loads.
std::vector<LabeledImage> load_labeled_dir(const std::filesystem::path& root, std::size_t size,
                                           std::vector<std::string>* class_names = nullptr);

/// Every image under `root` (recursive), resized to size × size.
std::vector<Image> load_image_dir(const std::filesystem::path& root, std::size_t size);

std::vector<Image> images_of(const std::vector<LabeledImage>& set);

}  // namespace lomar
