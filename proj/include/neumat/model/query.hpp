// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace neumat {

struct Vec2 {
  float x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalize(const Vec3& v) { return v * (1.0 / length(v)); }

struct Rgb {
  float r = 0, g = 0, b = 0;
  float operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
  float max() const { return std::max({r, g, b}); }
};

/// Upper-hemisphere direction -> unit disk (drop z).
inline Vec2 to_disk(const Vec3& w) { return {static_cast<float>(w.x), static_cast<float>(w.y)}; }

/// Unit disk -> upper-hemisphere direction with z = sqrt(1 - x^2 - y^2).
inline Vec3 from_disk(Vec2 d) {
  const double r2 = static_cast<double>(d.x) * d.x + static_cast<double>(d.y) * d.y;
  return {d.x, d.y, std::sqrt(std::max(0.0, 1.0 - r2))};
}

/// One material query: texture position, light and view directions
/// (projected to the unit disk) and the pyramid level coordinate.
struct Query7D {
  Vec2 uv;
  Vec2 wi;
  Vec2 wo;
  float lod = 0;

  std::array<float, 7> packed() const { return {uv.x, uv.y, wi.x, wi.y, wo.x, wo.y, lod}; }
  static Query7D unpack(const float* p) { return {{p[0], p[1]}, {p[2], p[3]}, {p[4], p[5]}, p[6]}; }
};

/// Pyramid level for a footprint of `texels` level-0 texels, clamped.
inline float lod_from_kernel(double texels, int num_levels) {
  const double lod = std::log2(std::max(texels, 1e-12));
  return static_cast<float>(std::clamp(lod, 0.0, static_cast<double>(num_levels - 1)));
}

}  // namespace neumat
