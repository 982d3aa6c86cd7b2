// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "neumat/autodiff/tensor.hpp"

namespace neumat {

struct SampleStats {
  std::size_t queries = 0;
  std::size_t clamped_lod = 0;
};

namespace detail {

/// Bilinear tap set for one level: 4 texel offsets, weights and the
/// derivative of each weight w.r.t. u.x / u.y.
struct BilinearTaps {
  std::size_t index[4];
  double w[4];
  double dwdx[4];
  double dwdy[4];
};

inline std::size_t wrap_index(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  long r = i % m;
  return static_cast<std::size_t>(r < 0 ? r + m : r);
}

/// Texel centres sit at (i + 0.5) / R; addressing wraps.
inline BilinearTaps bilinear_taps(double ux, double uy, std::size_t res) {
  const double fx = ux * static_cast<double>(res) - 0.5, fy = uy * static_cast<double>(res) - 0.5;
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const double tx = fx - x0f, ty = fy - y0f;
  const long x0 = static_cast<long>(x0f), y0 = static_cast<long>(y0f);
  const std::size_t xa = wrap_index(x0, res), xb = wrap_index(x0 + 1, res);
  const std::size_t ya = wrap_index(y0, res), yb = wrap_index(y0 + 1, res);
  const double r = static_cast<double>(res);
  BilinearTaps t;
  t.index[0] = ya * res + xa;
  t.index[1] = ya * res + xb;
  t.index[2] = yb * res + xa;
  t.index[3] = yb * res + xb;
  t.w[0] = (1 - tx) * (1 - ty);
  t.w[1] = tx * (1 - ty);
  t.w[2] = (1 - tx) * ty;
  t.w[3] = tx * ty;
  t.dwdx[0] = -r * (1 - ty);
  t.dwdx[1] = r * (1 - ty);
  t.dwdx[2] = -r * ty;
  t.dwdx[3] = r * ty;
  t.dwdy[0] = -r * (1 - tx);
  t.dwdy[1] = -r * tx;
  t.dwdy[2] = r * (1 - tx);
  t.dwdy[3] = r * tx;
  return t;
}

struct LevelBlend {
  std::size_t lo, hi;
  double t;         // weight of `hi`
  bool clamped;
  bool blends() const { return hi != lo; }
};

inline LevelBlend level_blend(double lod, std::size_t num_levels) {
  const double top = static_cast<double>(num_levels - 1);
  const bool clamped = !(lod >= 0.0 && lod <= top);
  const double l = std::isnan(lod) ? 0.0 : std::clamp(lod, 0.0, top);
  const std::size_t lo = static_cast<std::size_t>(std::floor(l));
  const std::size_t hi = std::min(lo + 1, num_levels - 1);
  return {lo, hi, l - static_cast<double>(lo), clamped};
}

}  // namespace detail

/// Trilinear lookup into a latent texture pyramid.
///
/// levels[l] has shape [R_l x R_l x C] with R_l = R_0 / 2^l; uv is [N x 2],
/// lod is [N]. Each level is sampled bilinearly with wrap addressing and
/// the two levels bracketing `lod` are blended linearly. Out-of-range lod
/// is clamped and counted in `stats`. Differentiable w.r.t. texels, uv and
/// lod.
template <typename T>
ad::Tensor<T> sample_pyramid(ad::Tape<T>& tape, std::span<const ad::Tensor<T>> levels, const ad::Tensor<T>& uv,
                             const ad::Tensor<T>& lod, SampleStats* stats = nullptr) {
  using ad::ShapeError;
  if (levels.empty()) throw ShapeError("sample_pyramid: no levels");
  const std::size_t channels = levels[0].dim(2);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& s = levels[l].shape();
    if (s.size() != 3 || s[0] != s[1] || s[2] != channels) {
      throw ShapeError("sample_pyramid: level " + std::to_string(l) + " has shape " + ad::to_string(s));
    }
  }
  if (uv.rank() != 2 || uv.dim(1) != 2) throw ShapeError("sample_pyramid: uv must be [N x 2]");
  const std::size_t n = uv.dim(0);
  if (lod.numel() != n) throw ShapeError("sample_pyramid: lod must have one entry per query");

  std::vector<T> out(n * channels, T(0));
  std::size_t clamped = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const auto blend = detail::level_blend(lod[q], levels.size());
    clamped += blend.clamped;
    T* dst = out.data() + q * channels;
    for (int side = 0; side < (blend.blends() ? 2 : 1); ++side) {
      const std::size_t l = side ? blend.hi : blend.lo;
      const double lw = blend.blends() ? (side ? blend.t : 1.0 - blend.t) : 1.0;
      if (lw == 0.0) continue;
      const auto taps = detail::bilinear_taps(uv[2 * q], uv[2 * q + 1], levels[l].dim(0));
      const T* tex = levels[l].ptr();
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += taps.w[k] * tex[taps.index[k] * channels + c];
        dst[c] = static_cast<T>(dst[c] + lw * acc);
      }
    }
  }
  if (stats) {
    stats->queries += n;
    stats->clamped_lod += clamped;
  }

  std::vector<ad::Tensor<T>> inputs(levels.begin(), levels.end());
  inputs.push_back(uv);
  inputs.push_back(lod);
  std::vector<ad::Tensor<T>> saved = inputs;
  return tape.emit("sample_pyramid", {n, channels}, std::move(out), inputs,
                   [saved, n, channels](std::span<const T> g) {
                     const std::size_t num_levels = saved.size() - 2;
                     const auto& uv = saved[num_levels];
                     const auto& lod = saved[num_levels + 1];
                     for (std::size_t q = 0; q < n; ++q) {
                       const auto blend = detail::level_blend(lod[q], num_levels);
                       const T* gq = g.data() + q * channels;
                       double dux = 0, duy = 0;
                       double level_value[2] = {0, 0};  // <g, sample_l> for the lod derivative
                       for (int side = 0; side < (blend.blends() ? 2 : 1); ++side) {
                         const std::size_t l = side ? blend.hi : blend.lo;
                         const double lw = blend.blends() ? (side ? blend.t : 1.0 - blend.t) : 1.0;
                         const auto taps = detail::bilinear_taps(uv[2 * q], uv[2 * q + 1], saved[l].dim(0));
                         const T* tex = saved[l].ptr();
                         for (int k = 0; k < 4; ++k) {
                           double dot = 0;
                           for (std::size_t c = 0; c < channels; ++c) dot += gq[c] * tex[taps.index[k] * channels + c];
                           dux += lw * taps.dwdx[k] * dot;
                           duy += lw * taps.dwdy[k] * dot;
                           level_value[side] += taps.w[k] * dot;
                         }
                         if (saved[l].requires_grad() && lw != 0.0) {
                           auto& gt = ad::grad_of(saved[l]);
                           for (int k = 0; k < 4; ++k) {
                             const double wk = lw * taps.w[k];
                             T* dst = gt.data() + taps.index[k] * channels;
                             for (std::size_t c = 0; c < channels; ++c) dst[c] = static_cast<T>(dst[c] + wk * gq[c]);
                           }
                         }
                       }
                       if (uv.requires_grad()) {
                         auto& gu = ad::grad_of(uv);
                         gu[2 * q] = static_cast<T>(gu[2 * q] + dux);
                         gu[2 * q + 1] = static_cast<T>(gu[2 * q + 1] + duy);
                       }
                       if (lod.requires_grad() && blend.blends() && !blend.clamped) {
                         auto& gl = ad::grad_of(lod);
                         gl[q] = static_cast<T>(gl[q] + level_value[1] - level_value[0]);
                       }
                     }
                   });
}

}  // namespace neumat
