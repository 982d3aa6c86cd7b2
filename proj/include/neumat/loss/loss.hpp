// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "neumat/autodiff/ops.hpp"

// Training objective: L1 on raw radiance plus a Sobel-gradient term on
// 4th-root remapped images. Images are batches of tiles [N x C x h x w].
namespace neumat {

struct LossConfig {
  bool gradient_loss = true;
  bool remap = true;
  double gradient_weight = 1.0;
};

inline constexpr std::array<float, 9> kSobelX = {1, 0, -1, 2, 0, -2, 1, 0, -1};
inline constexpr std::array<float, 9> kSobelY = {1, 2, 1, 0, 0, 0, -1, -2, -1};

template <typename T>
struct SobelPair {
  ad::Tensor<T> gx, gy;
};

/// Per-channel Sobel responses with zero padding 1; same shape as the input.
template <typename T>
SobelPair<T> sobel(ad::Tape<T>& tape, const ad::Tensor<T>& images) {
  if (images.rank() != 4) throw ad::ShapeError("sobel: expected [N x C x h x w], got " + ad::to_string(images.shape()));
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (h < 3 || w < 3) {
    throw ad::ShapeError("sobel: tile " + std::to_string(h) + "x" + std::to_string(w) + " smaller than the 3x3 kernel");
  }
  const auto planes = ad::reshape(tape, images, {n * c, 1, h, w});
  auto apply = [&](const std::array<float, 9>& k) {
    const auto kernel = ad::Tensor<T>::constant({1, 1, 3, 3}, std::vector<T>(k.begin(), k.end()));
    return ad::reshape(tape, ad::conv2d(tape, planes, kernel, 1), {n, c, h, w});
  };
  return {apply(kSobelX), apply(kSobelY)};
}

/// mean over texels and channels of (Gx_ref - Gx)^2 + (Gy_ref - Gy)^2.
template <typename T>
ad::Tensor<T> gradient_loss(ad::Tape<T>& tape, const ad::Tensor<T>& pred, const ad::Tensor<T>& ref) {
  if (pred.shape() != ref.shape()) {
    throw ad::ShapeError("gradient_loss: shape mismatch " + ad::to_string(pred.shape()) + " vs " +
                         ad::to_string(ref.shape()));
  }
  const auto p = sobel(tape, pred);
  const auto r = sobel(tape, ref);
  const auto sx = ad::sum(tape, ad::square(tape, ad::sub(tape, r.gx, p.gx)));
  const auto sy = ad::sum(tape, ad::square(tape, ad::sub(tape, r.gy, p.gy)));
  return ad::scale(tape, ad::add(tape, sx, sy), 1.0 / static_cast<double>(pred.numel()));
}

struct RemapStats {
  std::size_t clamped = 0;
};

/// clamp(x, 0, inf)^(1/4), with a zero subgradient at 0.
template <typename T>
ad::Tensor<T> remap(ad::Tape<T>& tape, const ad::Tensor<T>& x, RemapStats* stats = nullptr) {
  if (stats) {
    for (T v : x.data()) stats->clamped += v < T(0);
  }
  return ad::pow(tape, ad::clamp_min(tape, x, 0.0), 0.25);
}

template <typename T>
struct LossTerms {
  ad::Tensor<T> total;
  double l1 = 0;
  double gradient = 0;  // unweighted gradient term, 0 when disabled
  std::size_t clamped = 0;
};

/// mean|ref - pred| + weight * gradient_loss(remap(pred), remap(ref)).
/// With remapping off the gradient term sees raw radiance; with the
/// gradient term off this is plain L1.
template <typename T>
LossTerms<T> combined_loss(ad::Tape<T>& tape, const ad::Tensor<T>& pred, const ad::Tensor<T>& ref,
                           const LossConfig& cfg = {}) {
  if (pred.shape() != ref.shape()) {
    throw ad::ShapeError("combined_loss: shape mismatch " + ad::to_string(pred.shape()) + " vs " +
                         ad::to_string(ref.shape()));
  }
  LossTerms<T> out;
  const auto l1 = ad::mean(tape, ad::abs(tape, ad::sub(tape, pred, ref)));
  out.l1 = l1.item();
  out.total = l1;
  if (cfg.gradient_loss) {
    RemapStats stats;
    const auto a = cfg.remap ? remap(tape, pred, &stats) : pred;
    const auto b = cfg.remap ? remap(tape, ref, &stats) : ref;
    const auto g = gradient_loss(tape, a, b);
    out.gradient = g.item();
    out.clamped = stats.clamped;
    if (cfg.gradient_weight != 0.0) out.total = ad::add(tape, l1, ad::scale(tape, g, cfg.gradient_weight));
  }
  return out;
}

}  // namespace neumat
