// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "neumat/model/query.hpp"

namespace neumat {

enum class Geometry { quad, sphere };
enum class Projection { perspective, orthographic };

inline Geometry parse_geometry(const std::string& s) {
  if (s == "quad") return Geometry::quad;
  if (s == "sphere") return Geometry::sphere;
  throw std::invalid_argument("unknown geometry '" + s + "' (expected quad or sphere)");
}

/// Camera, light and surface for rendering a material. The quad lies in the
/// z = 0 plane spanning [-1, 1]^2 with +z normal; the sphere is centred at
/// the origin.
struct SceneConfig {
  Geometry geometry = Geometry::quad;
  Projection projection = Projection::perspective;
  Vec3 camera{0.0, -1.2, 1.6};
  Vec3 look_at{0.0, 0.0, 0.0};
  Vec3 up{0.0, 0.0, 1.0};
  double fov_degrees = 40.0;   // vertical, perspective only
  double ortho_height = 2.0;   // view height, orthographic only
  Vec3 light_direction{-0.4, 0.5, 0.77};  // toward the light
  double light_intensity = 1.0;
  std::uint32_t width = 128, height = 128;
  std::uint32_t spp = 1;
  std::uint64_t seed = 1;
  double uv_tiling = 1.0;
  double sphere_radius = 1.0;
  Rgb background{0.0f, 0.0f, 0.0f};

  void validate() const {
    if (width < 16 || height < 16) throw std::invalid_argument("scene: image extent must be at least 16x16");
    if (spp == 0) throw std::invalid_argument("scene: spp must be positive");
    if (!(uv_tiling > 0)) throw std::invalid_argument("scene: uv tiling must be positive");
    if (length(look_at - camera) <= 0) throw std::invalid_argument("scene: camera coincides with its target");
    if (length(light_direction) <= 0) throw std::invalid_argument("scene: light direction is zero");
    if (geometry == Geometry::sphere && length(camera) <= sphere_radius) {
      throw std::invalid_argument("scene: camera inside the sphere");
    }
    if (geometry == Geometry::quad && projection == Projection::perspective && camera.z <= 0) {
      throw std::invalid_argument("scene: camera below the quad");
    }
  }

  /// Fixed probe used for ablation strips: an oblique perspective view of a
  /// twice-tiled quad under a raking light.
  static SceneConfig probe() {
    SceneConfig s;
    s.uv_tiling = 2.0;
    s.spp = 4;
    return s;
  }
};

struct Ray {
  Vec3 origin, dir;
};

/// Surface point with its uv and tangent frame (t along +u, b along +v).
struct SurfaceSample {
  double t = 0;
  Vec3 p, n, tangent, bitangent;
  double u = 0, v = 0;
};

class Camera {
 public:
  explicit Camera(const SceneConfig& s) : s_(s) {
    forward_ = normalize(s.look_at - s.camera);
    Vec3 r = cross(forward_, s.up);
    if (length(r) < 1e-9) r = cross(forward_, std::abs(forward_.y) < 0.9 ? Vec3{0, 1, 0} : Vec3{1, 0, 0});
    right_ = normalize(r);
    up_ = cross(right_, forward_);
  }

  /// Ray through continuous pixel position (x, y), y growing downward.
  Ray ray(double x, double y) const {
    const double aspect = static_cast<double>(s_.width) / s_.height;
    const double sx = 2.0 * x / s_.width - 1.0, sy = 1.0 - 2.0 * y / s_.height;
    if (s_.projection == Projection::orthographic) {
      const double hh = 0.5 * s_.ortho_height;
      return {s_.camera + right_ * (sx * hh * aspect) + up_ * (sy * hh), forward_};
    }
    const double th = std::tan(0.5 * s_.fov_degrees * std::numbers::pi / 180.0);
    return {s_.camera, normalize(forward_ + right_ * (sx * th * aspect) + up_ * (sy * th))};
  }

 private:
  SceneConfig s_;
  Vec3 forward_, right_, up_;
};

/// Intersection with the scene geometry. With `unbounded`, the quad is
/// treated as its infinite plane (used for ray differentials near edges).
inline std::optional<SurfaceSample> intersect(const SceneConfig& s, const Ray& r, bool unbounded = false) {
  SurfaceSample h;
  if (s.geometry == Geometry::quad) {
    if (std::abs(r.dir.z) < 1e-12) return std::nullopt;
    h.t = -r.origin.z / r.dir.z;
    if (h.t <= 0) return std::nullopt;
    h.p = r.origin + r.dir * h.t;
    if (!unbounded && (std::abs(h.p.x) > 1.0 || std::abs(h.p.y) > 1.0)) return std::nullopt;
    h.n = {0, 0, 1};
    h.tangent = {1, 0, 0};
    h.bitangent = {0, 1, 0};
    h.u = 0.5 * (h.p.x + 1.0) * s.uv_tiling;
    h.v = 0.5 * (h.p.y + 1.0) * s.uv_tiling;
    return h;
  }
  const double b = dot(r.origin, r.dir), c = dot(r.origin, r.origin) - s.sphere_radius * s.sphere_radius;
  const double disc = b * b - c;
  if (disc < 0) return std::nullopt;
  h.t = -b - std::sqrt(disc);
  if (h.t <= 0) return std::nullopt;
  h.p = r.origin + r.dir * h.t;
  h.n = normalize(h.p);
  const double phi = std::atan2(h.n.y, h.n.x);
  const double theta = std::acos(std::clamp(h.n.z, -1.0, 1.0));
  h.u = (phi / (2 * std::numbers::pi) + 0.5) * s.uv_tiling;
  h.v = (1.0 - theta / std::numbers::pi) * s.uv_tiling;
  const Vec3 t{-std::sin(phi), std::cos(phi), 0.0};
  h.tangent = length(t) > 0 ? t : Vec3{1, 0, 0};
  h.bitangent = cross(h.n, h.tangent);
  return h;
}

/// Vector in the local frame of `h`.
inline Vec3 to_local(const SurfaceSample& h, const Vec3& w) {
  return {dot(w, h.tangent), dot(w, h.bitangent), dot(w, h.n)};
}

}  // namespace neumat
