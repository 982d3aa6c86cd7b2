// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "neumat/model/query.hpp"
#include "neumat/util/hash.hpp"
#include "neumat/util/image_io.hpp"
#include "neumat/util/rng.hpp"

namespace neumat {

/// Periodic displaced surface over the unit uv square. The surface sits at
/// z = height_scale * (h(u) - 1) so its highest point touches z = 0.
struct HeightfieldMaterial {
  std::uint32_t resolution = 0;
  std::vector<float> height;  // R x R, row-major (y, x), values in [0, 1]
  std::vector<Rgb> albedo;    // R x R
  double roughness = 0.3;     // Beckmann alpha
  double specular_weight = 0.5;
  double height_scale = 0.04;  // in uv units

  void validate() const {
    const std::size_t n = static_cast<std::size_t>(resolution) * resolution;
    if (resolution == 0 || height.size() != n || albedo.size() != n) {
      throw std::invalid_argument("heightfield: maps do not match resolution " + std::to_string(resolution));
    }
    if (!(roughness > 0.0 && roughness <= 1.0)) throw std::invalid_argument("heightfield: roughness must be in (0, 1]");
    if (!(specular_weight >= 0.0) || !(height_scale >= 0.0)) {
      throw std::invalid_argument("heightfield: specular weight and height scale must be non-negative");
    }
    for (float h : height) {
      if (!std::isfinite(h)) throw std::invalid_argument("heightfield: non-finite height");
    }
    for (const auto& a : albedo) {
      for (int c = 0; c < 3; ++c) {
        if (!(a[c] >= 0.0f && a[c] <= 1.0f)) throw std::invalid_argument("heightfield: albedo outside [0, 1]");
      }
    }
  }

  float albedo_max() const {
    float m = 0;
    for (const auto& a : albedo) m = std::max(m, a.max());
    return m;
  }

  /// Content hash over maps and shading constants.
  std::uint64_t hash() const {
    Fnv1a h;
    h.update(std::as_bytes(std::span(height)));
    h.update(std::as_bytes(std::span(albedo)));
    for (double v : {roughness, specular_weight, height_scale}) h.update(std::as_bytes(std::span(&v, 1)));
    return hash_combine(h.digest(), resolution);
  }

  /// Bilinear map lookup, texel centres at (i + 0.5) / R, wrapping.
  template <typename F>
  auto bilinear(double ux, double uy, F fetch) const {
    const double x = ux * resolution - 0.5, y = uy * resolution - 0.5;
    const double fx = std::floor(x), fy = std::floor(y);
    const double tx = x - fx, ty = y - fy;
    const long r = resolution;
    const auto wrap = [r](long i) { return static_cast<std::size_t>(((i % r) + r) % r); };
    const std::size_t x0 = wrap(static_cast<long>(fx)), x1 = wrap(static_cast<long>(fx) + 1);
    const std::size_t y0 = wrap(static_cast<long>(fy)), y1 = wrap(static_cast<long>(fy) + 1);
    const std::size_t R = resolution;
    return (fetch(y0 * R + x0) * (1 - tx) + fetch(y0 * R + x1) * tx) * (1 - ty) +
           (fetch(y1 * R + x0) * (1 - tx) + fetch(y1 * R + x1) * tx) * ty;
  }

  double height_at(double ux, double uy) const {
    return bilinear(ux, uy, [this](std::size_t i) { return static_cast<double>(height[i]); });
  }
  /// Surface elevation z(u) <= 0.
  double surface_z(double ux, double uy) const { return height_scale * (height_at(ux, uy) - 1.0); }

  Vec3 albedo_at(double ux, double uy) const {
    return bilinear(ux, uy, [this](std::size_t i) { return Vec3{albedo[i].r, albedo[i].g, albedo[i].b}; });
  }

  /// Geometric normal from central differences one texel apart.
  Vec3 normal_at(double ux, double uy) const {
    const double d = 1.0 / resolution;
    const double dzdx = (surface_z(ux + d, uy) - surface_z(ux - d, uy)) / (2 * d);
    const double dzdy = (surface_z(ux, uy + d) - surface_z(ux, uy - d)) / (2 * d);
    return normalize(Vec3{-dzdx, -dzdy, 1.0});
  }
};

inline HeightfieldMaterial flat_material(std::uint32_t resolution, Rgb albedo, double specular_weight = 0.0,
                                         double roughness = 0.3) {
  HeightfieldMaterial m;
  m.resolution = resolution;
  m.height.assign(static_cast<std::size_t>(resolution) * resolution, 1.0f);
  m.albedo.assign(m.height.size(), albedo);
  m.specular_weight = specular_weight;
  m.roughness = roughness;
  m.height_scale = 0.0;
  return m;
}

namespace detail {

inline double periodic_delta(double a, double b) {
  double d = a - b;
  return d - std::round(d);
}

inline void normalize_heights(std::vector<float>& h) {
  const auto [lo, hi] = std::minmax_element(h.begin(), h.end());
  const float a = *lo, span = std::max(*hi - *lo, 1e-12f);
  for (auto& v : h) v = (v - a) / span;
}

inline Rgb mix(Rgb a, Rgb b, double t) {
  return {static_cast<float>(a.r + (b.r - a.r) * t), static_cast<float>(a.g + (b.g - a.g) * t),
          static_cast<float>(a.b + (b.b - a.b) * t)};
}

}  // namespace detail

/// Glossy surface covered in random Gaussian bumps. Albedo follows height
/// so that parallax shifts colour as well as shading.
inline HeightfieldMaterial bumps_material(std::uint32_t resolution, std::uint64_t seed, int bump_count = 28) {
  HeightfieldMaterial m;
  m.resolution = resolution;
  m.roughness = 0.25;
  m.specular_weight = 0.6;
  m.height_scale = 0.04;
  StreamRng rng(seed, 0xb0b5, 0);
  struct Bump {
    double x, y, radius, amp;
  };
  std::vector<Bump> bumps(static_cast<std::size_t>(bump_count));
  for (auto& b : bumps) b = {rng.uniform(), rng.uniform(), 0.03 + 0.06 * rng.uniform(), 0.5 + 0.5 * rng.uniform()};
  const std::size_t R = resolution;
  m.height.resize(R * R);
  for (std::size_t y = 0; y < R; ++y) {
    for (std::size_t x = 0; x < R; ++x) {
      const double ux = (x + 0.5) / R, uy = (y + 0.5) / R;
      double h = 0;
      for (const auto& b : bumps) {
        const double dx = detail::periodic_delta(ux, b.x), dy = detail::periodic_delta(uy, b.y);
        h += b.amp * std::exp(-(dx * dx + dy * dy) / (2 * b.radius * b.radius));
      }
      m.height[y * R + x] = static_cast<float>(h);
    }
  }
  detail::normalize_heights(m.height);
  const Rgb low{0.55f, 0.12f, 0.08f}, high{0.85f, 0.75f, 0.35f};
  m.albedo.resize(R * R);
  for (std::size_t i = 0; i < R * R; ++i) m.albedo[i] = detail::mix(low, high, m.height[i]);
  return m;
}

/// Plain weave: warp threads along x and weft threads along y, each rising
/// and sinking over alternate crossings.
inline HeightfieldMaterial woven_material(std::uint32_t resolution, int threads = 8) {
  HeightfieldMaterial m;
  m.resolution = resolution;
  m.roughness = 0.35;
  m.specular_weight = 0.4;
  m.height_scale = 0.03;
  const std::size_t R = resolution;
  m.height.resize(R * R);
  m.albedo.resize(R * R);
  const Rgb warp{0.2f, 0.3f, 0.6f}, weft{0.75f, 0.7f, 0.55f};
  const double pi = std::numbers::pi;
  for (std::size_t y = 0; y < R; ++y) {
    for (std::size_t x = 0; x < R; ++x) {
      const double ux = (x + 0.5) / R * threads, uy = (y + 0.5) / R * threads;
      const double across_warp = std::abs(std::sin(pi * uy));  // thread profile across y
      const double across_weft = std::abs(std::sin(pi * ux));
      const double warp_h = across_warp * (0.6 + 0.4 * std::sin(pi * ux + pi * std::floor(uy)));
      const double weft_h = across_weft * (0.6 - 0.4 * std::sin(pi * uy + pi * std::floor(ux)));
      const bool warp_on_top = warp_h >= weft_h;
      m.height[y * R + x] = static_cast<float>(std::max(warp_h, weft_h));
      m.albedo[y * R + x] = warp_on_top ? warp : weft;
    }
  }
  detail::normalize_heights(m.height);
  return m;
}

/// Heightmap from a grayscale PNG, resampled to R x R by nearest texel.
inline HeightfieldMaterial image_material(const std::string& path, std::uint32_t resolution) {
  const auto img = read_png_gray(path);
  HeightfieldMaterial m;
  m.resolution = resolution;
  m.roughness = 0.3;
  m.specular_weight = 0.5;
  m.height_scale = 0.04;
  const std::size_t R = resolution;
  m.height.resize(R * R);
  for (std::size_t y = 0; y < R; ++y) {
    for (std::size_t x = 0; x < R; ++x) {
      const std::size_t sx = std::min<std::size_t>(img.width - 1, (x * img.width) / R);
      const std::size_t sy = std::min<std::size_t>(img.height - 1, (y * img.height) / R);
      m.height[y * R + x] = img.value[sy * img.width + sx];
    }
  }
  const Rgb low{0.3f, 0.3f, 0.3f}, high{0.8f, 0.8f, 0.8f};
  m.albedo.resize(R * R);
  for (std::size_t i = 0; i < R * R; ++i) m.albedo[i] = detail::mix(low, high, m.height[i]);
  return m;
}

/// Named material source for the generator and CLI.
struct MaterialSpec {
  std::string kind = "bumps";  // bumps | woven | flat | png
  std::string image_path;      // for kind == png
  std::uint32_t resolution = 64;
  std::uint64_t seed = 1;

  HeightfieldMaterial build() const {
    if ((resolution & (resolution - 1)) != 0 || resolution == 0) {
      throw std::invalid_argument("material resolution must be a power of two, got " + std::to_string(resolution));
    }
    HeightfieldMaterial m;
    if (kind == "bumps") m = bumps_material(resolution, seed);
    else if (kind == "woven") m = woven_material(resolution);
    else if (kind == "flat") m = flat_material(resolution, {0.5f, 0.5f, 0.5f}, 0.3);
    else if (kind == "png") m = image_material(image_path, resolution);
    else throw std::invalid_argument("unknown material kind '" + kind + "' (expected bumps, woven, flat or png)");
    m.validate();
    return m;
  }
};

}  // namespace neumat
