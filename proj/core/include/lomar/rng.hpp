#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace lomar {

using Rng = std::mt19937_64;

/// Independent random streams derived from one run seed.
enum class Purpose : std::uint64_t {
  init = 0x494e4954,        // "INIT"
  augment = 0x41554731,     // "AUG1"
  windows = 0x57494e44,     // "WIND"
  masks = 0x4d41534b,       // "MASK"
  data = 0x44415441,        // "DATA"
  probe = 0x50524f42,       // "PROB"
  corpus = 0x434f5250,      // "CORP"
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for one purpose: mix64(seed XOR tag).
constexpr std::uint64_t purpose_seed(std::uint64_t seed, Purpose purpose) {
  return mix64(seed ^ static_cast<std::uint64_t>(purpose));
}

/// Seed for a sub-stream, e.g. (step, image index) under a purpose seed.
constexpr std::uint64_t stream_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(base ^ mix64(a)) ^ mix64(b + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, Purpose purpose) { return Rng(purpose_seed(seed, purpose)); }

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& text);

}  // namespace lomar
