#pragma once

// Deterministic randomness shared by every module.
//
// Generator: SplitMix64 used in counter mode. Draw i of a stream keyed by K is
//
//     z  = K + (i + 1) * 0x9E3779B97F4A7C15   (mod 2^64)
//     z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//     z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//     out = z ^ (z >> 31)
//
// so any draw can be reproduced from (key, index) alone. Uniform doubles take
// the top 53 bits. Normals use Box-Muller on two consecutive draws; both
// outputs of a pair are consumed in order.
//
// hash64 is 64-bit FNV-1a (offset basis 0xcbf29ce484222325, prime
// 0x100000001b3) over the raw UTF-8 bytes.

#include <cstdint>
#include <string_view>

namespace plab {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derive an independent stream key from a parent seed and a tag.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return mix64(seed ^ mix64(tag + kGoldenGamma));
}

class Rng {
 public:
  explicit constexpr Rng(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGoldenGamma);
  }

  /// Uniform in [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in the open interval (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_int(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller.
  double normal() noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace plab
