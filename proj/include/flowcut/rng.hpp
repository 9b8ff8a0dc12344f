#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace flowcut {

// SplitMix64: the one PRNG used everywhere so that identical seeds give
// identical corpora, initializations and training runs.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 53 random bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in the open interval (-s, s); the zero mantissa draw is
  // rejected so the bound is strict.
  double next_symmetric(double s) {
    uint64_t bits = next() >> 11;
    while (bits == 0) bits = next() >> 11;
    return s * (2.0 * (static_cast<double>(bits) * 0x1.0p-53) - 1.0);
  }

  // Standard normal via Box-Muller (cosine branch only, two draws per call).
  double next_gaussian() {
    double u1 = 1.0 - next_double();  // (0,1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform index in [0,n). n must be positive.
  uint64_t next_index(uint64_t n) {
    uint64_t i = static_cast<uint64_t>(next_double() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

 private:
  uint64_t state_;
};

// One scramble round, usable as a stateless hash.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stage seeds derive from one top-level seed plus a fixed label so partial
// pipeline reruns stay reproducible.
inline uint64_t derive_seed(uint64_t base, std::string_view label) {
  uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return mix64(base ^ h);
}

// Deterministic per-coordinate hash for procedural textures.
inline uint64_t hash_coords(uint64_t seed, int64_t x, int64_t y) {
  uint64_t h = seed;
  h = mix64(h ^ (static_cast<uint64_t>(x) * 0x9E3779B97F4A7C15ull));
  h = mix64(h ^ (static_cast<uint64_t>(y) * 0xC2B2AE3D27D4EB4Full));
  return h;
}

inline double hash_coords_unit(uint64_t seed, int64_t x, int64_t y) {
  return static_cast<double>(hash_coords(seed, x, y) >> 11) * 0x1.0p-53;
}

}  // namespace flowcut
