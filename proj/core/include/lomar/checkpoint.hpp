#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lomar/tensor.hpp"

namespace lomar {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Element type tag stored per tensor (byte width of the element).
enum class DType : std::uint8_t { f32 = 4, f64 = 8 };

struct CheckpointTensor {
  std::string name;
  Shape shape;
  DType dtype = DType::f32;
  std::vector<std::byte> bytes;  // little-endian payload

  template <typename T>
  static CheckpointTensor pack(std::string name, const Shape& shape, std::span<const T> values);
  /// Copies into `out` (converting between widths when needed). Throws
  /// CheckpointError when the element count differs.
  template <typename T>
  void unpack(std::span<T> out) const;
  std::size_t element_count() const { return shape_size(shape); }
};

/// File layout: "LMCK", u32 version, u32 length + config text, u32 tensor
/// count, then per tensor u32 name length, name, u8 dtype, u32 rank, u32
/// dims, payload; u32 length + RNG state text; u64 step. All little-endian.
struct Checkpoint {
  std::string config_text;
  std::vector<CheckpointTensor> tensors;
  std::string rng_state;
  std::uint64_t step = 0;

  /// Throws CheckpointError(malformed) when absent.
  const CheckpointTensor& find(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError with kind bad_magic, version_mismatch, truncated
/// or malformed.
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lomar
