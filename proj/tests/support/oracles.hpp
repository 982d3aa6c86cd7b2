// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <vector>

// Nested-loop reference implementations, written for clarity only.
namespace neumat::oracle {

/// Cross-correlation of one [C x H x W] image with [O x C x kh x kw], zero padding.
inline std::vector<double> conv2d(const std::vector<double>& in, std::size_t c, std::size_t h, std::size_t w,
                                  const std::vector<double>& k, std::size_t o, std::size_t kh, std::size_t kw,
                                  std::size_t pad) {
  const std::size_t oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
  std::vector<double> out(o * oh * ow, 0.0);
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0;
        for (std::size_t ic = 0; ic < c; ++ic)
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long sy = static_cast<long>(y + i) - static_cast<long>(pad);
              const long sx = static_cast<long>(x + j) - static_cast<long>(pad);
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
              acc += in[(ic * h + sy) * w + sx] * k[((oc * c + ic) * kh + i) * kw + j];
            }
        out[(oc * oh + y) * ow + x] = acc;
      }
  return out;
}

/// Per-channel max over a window x window neighbourhood (stride 1, padding never wins).
inline std::vector<double> maxpool2d(const std::vector<double>& in, std::size_t c, std::size_t h, std::size_t w,
                                     std::size_t window, std::size_t pad) {
  const std::size_t oh = h + 2 * pad - window + 1, ow = w + 2 * pad - window + 1;
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < window; ++i)
          for (std::size_t j = 0; j < window; ++j) {
            const long sy = static_cast<long>(y + i) - static_cast<long>(pad);
            const long sx = static_cast<long>(x + j) - static_cast<long>(pad);
            if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
            best = std::max(best, in[(ch * h + sy) * w + sx]);
          }
        out[(ch * oh + y) * ow + x] = best;
      }
  return out;
}

inline constexpr std::array<double, 9> kSobelX = {1, 0, -1, 2, 0, -2, 1, 0, -1};
inline constexpr std::array<double, 9> kSobelY = {1, 2, 1, 0, 0, 0, -1, -2, -1};

/// Sobel responses of one h x w plane, zero padding 1.
inline std::vector<double> sobel(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::array<double, 9>& k) {
  std::vector<double> out(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          const long sy = static_cast<long>(y) + i, sx = static_cast<long>(x) + j;
          if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
          acc += img[sy * w + sx] * k[(i + 1) * 3 + (j + 1)];
        }
      out[y * w + x] = acc;
    }
  return out;
}

/// Mean over texels and channels of squared Sobel differences; planes are
/// consecutive h x w blocks.
inline double gradient_loss(const std::vector<double>& pred, const std::vector<double>& ref, std::size_t planes,
                            std::size_t h, std::size_t w) {
  double acc = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const std::vector<double> a(pred.begin() + p * h * w, pred.begin() + (p + 1) * h * w);
    const std::vector<double> b(ref.begin() + p * h * w, ref.begin() + (p + 1) * h * w);
    for (const auto* k : {&kSobelX, &kSobelY}) {
      const auto ga = sobel(a, h, w, *k), gb = sobel(b, h, w, *k);
      for (std::size_t i = 0; i < h * w; ++i) acc += (gb[i] - ga[i]) * (gb[i] - ga[i]);
    }
  }
  return acc / static_cast<double>(planes * h * w);
}

}  // namespace neumat::oracle
