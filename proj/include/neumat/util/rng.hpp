// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "neumat/util/hash.hpp"

namespace neumat {

/// Cheap counter-derived generator for per-sample streams. A stream is
/// identified by a tuple of integers, so parallel and serial generation
/// draw identical numbers.
class StreamRng {
 public:
  explicit StreamRng(std::uint64_t seed) : state_(seed) {}
  StreamRng(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
      : state_(hash_combine(hash_combine(seed, a), b)) {}
  StreamRng(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c)
      : state_(hash_combine(hash_combine(hash_combine(seed, a), b), c)) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Distribution helpers with a fixed definition, independent of the
// standard library's (implementation-defined) distributions.
template <typename Engine>
double uniform01(Engine& rng) {
  static_assert(Engine::min() == 0 && Engine::max() == ~std::uint64_t{0});
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Engine>
double uniform(Engine& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n), n < 2^32.
template <typename Engine>
std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
  return ((rng() >> 32) * n) >> 32;
}

using TrainRng = std::mt19937_64;

inline std::string serialize_rng(const TrainRng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline TrainRng deserialize_rng(const std::string& text) {
  TrainRng rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw std::runtime_error("invalid RNG state in checkpoint");
  return rng;
}

}  // namespace neumat
