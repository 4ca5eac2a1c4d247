#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace mcb {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a of a purpose tag.
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char ch : tag) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed of the stream identified by (root, purpose, index):
///   mix64(mix64(root ^ fnv1a(purpose)) + index)
/// Streams depend only on their own triple, so results for chain i do not
/// change when more chains are requested.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(root ^ tag_hash(purpose)) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng derived(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0) {
    return Rng(derive_seed(root, purpose, index));
  }

  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  double normal() { return normal_(engine_); }
  void fill_normal(std::span<double> out) {
    for (double& v : out) v = normal_(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Inverse-CDF draw over categories in index order. Probabilities need not be
/// normalized; zero-mass categories are never returned.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

}  // namespace mcb
