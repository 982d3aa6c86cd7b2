// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace neumat {

/// Default octave counts for positions and directions.
inline constexpr std::size_t kPositionOctaves = 10;
inline constexpr std::size_t kDirectionOctaves = 4;

/// (sin 2^0 pi p, cos 2^0 pi p, ..., sin 2^{L-1} pi p, cos 2^{L-1} pi p).
inline std::vector<double> fourier_features(double p, std::size_t octaves) {
  std::vector<double> out;
  out.reserve(2 * octaves);
  double freq = std::numbers::pi;
  for (std::size_t k = 0; k < octaves; ++k, freq *= 2.0) {
    out.push_back(std::sin(freq * p));
    out.push_back(std::cos(freq * p));
  }
  return out;
}

/// Width of the encoding of a `dims`-component input; L = 0 means the raw input.
constexpr std::size_t encoded_width(std::size_t dims, std::size_t octaves) {
  return octaves == 0 ? dims : 2 * octaves * dims;
}

}  // namespace neumat
