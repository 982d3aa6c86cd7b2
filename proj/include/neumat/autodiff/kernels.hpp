// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

// Dense building blocks shared by the differentiable ops. All reductions
// accumulate in double regardless of the storage type.
namespace neumat::ad::kernels {

/// C[m x n] (+)= A[m x k] * B[k x n], all row-major.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    T* crow = c + i * n;
    if (accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<T>(crow[j] + acc[j]);
    } else {
      for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<T>(acc[j]);
    }
  }
}

/// out[cols x rows] = transpose(in[rows x cols]).
template <typename T>
std::vector<T> transpose(const T* in, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t r1 = std::min(rows, r0 + kBlock), c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
      }
    }
  }
  return out;
}

/// Geometry of a stride-1 2-D cross-correlation with symmetric zero padding.
struct ConvGeometry {
  std::size_t channels, height, width;  // input
  std::size_t kh, kw, pad;
  std::size_t out_h() const { return height + 2 * pad - kh + 1; }
  std::size_t out_w() const { return width + 2 * pad - kw + 1; }
  std::size_t patch() const { return channels * kh * kw; }
};

/// Unfolds one image into columns: col[(c, ky, kx) x (oy, ox)].
template <typename T>
void im2col(const ConvGeometry& g, const T* img, T* col) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        T* dst = col + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          T* drow = dst + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(drow, drow + ow, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad);
            drow[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : srow[ix];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters column gradients back onto the image.
template <typename T, typename Acc>
void col2im_add(const ConvGeometry& g, const T* col, Acc* img) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    Acc* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        const T* src = col + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          Acc* drow = plane + static_cast<std::size_t>(iy) * g.width;
          const T* srow = src + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace neumat::ad::kernels
