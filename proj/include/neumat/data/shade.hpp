// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>

#include "neumat/data/heightfield.hpp"

// Direct-illumination reference for heightfield materials: a view ray enters
// the slab at z = 0 above u, is marched to the displaced surface, and the hit
// point is lit by a unit-radiance distant light if the march toward the light
// escapes the slab.
namespace neumat {

struct MarchSettings {
  double step_texels = 0.25;  // step length in texels of the heightmap
  int refine_iterations = 8;
  int max_steps = 1 << 14;
};

struct ShadeStats {
  std::size_t queries = 0;
  std::size_t misses = 0;
  std::size_t shadowed = 0;
};

/// Normalized Beckmann distribution (includes the 1/cos^4 term).
inline double beckmann(double cos_h, double alpha) {
  if (cos_h <= 0) return 0;
  const double c2 = cos_h * cos_h;
  const double tan2 = (1 - c2) / c2;
  const double a2 = alpha * alpha;
  return std::exp(-tan2 / a2) / (std::numbers::pi * a2 * c2 * c2);
}

/// Supremum of beckmann() over all half vectors.
inline double beckmann_max(double alpha) {
  const double a2 = alpha * alpha;
  const double s = std::max(0.0, 2 * a2 - 1);
  return std::exp(-s / a2) * (1 + s) * (1 + s) / (std::numbers::pi * a2);
}

/// Radiance ceiling for any query on `m`.
inline double radiance_bound(const HeightfieldMaterial& m) {
  return m.albedo_max() / std::numbers::pi + m.specular_weight * beckmann_max(m.roughness) / 4.0;
}

/// Local BRDF times cosine for a unit-radiance light.
inline Vec3 shade_point(const HeightfieldMaterial& m, double ux, double uy, const Vec3& n, const Vec3& wi,
                        const Vec3& wo) {
  const double cos_i = dot(n, wi);
  if (cos_i <= 0) return {};
  const double cos_o = std::max(dot(n, wo), 0.0);
  const Vec3 diffuse = m.albedo_at(ux, uy) * (cos_i / std::numbers::pi);
  double spec = 0;
  if (m.specular_weight > 0) {
    const Vec3 h = normalize(wi + wo);
    spec = m.specular_weight * beckmann(dot(n, h), m.roughness) / (4.0 * std::max(cos_i, cos_o)) * cos_i;
  }
  return diffuse + Vec3{spec, spec, spec};
}

/// Parallax-corrected hit of the view ray entering the slab above (ux, uy).
struct SurfaceHit {
  bool hit = false;
  double x = 0, y = 0, z = 0;
};

inline SurfaceHit march_view_ray(const HeightfieldMaterial& m, double ux, double uy, const Vec3& wo,
                                 const MarchSettings& s) {
  const double step = s.step_texels / m.resolution;
  const Vec3 d = wo * -1.0;
  auto gap = [&](double t) { return t * d.z - m.surface_z(ux + t * d.x, uy + t * d.y); };
  if (gap(0) <= 0) return {true, ux, uy, m.surface_z(ux, uy)};
  double t0 = 0, t1 = 0;
  bool crossed = false;
  for (int i = 1; i <= s.max_steps; ++i) {
    t1 = i * step;
    if (gap(t1) <= 0) {
      crossed = true;
      break;
    }
    t0 = t1;
  }
  if (!crossed) return {};
  for (int i = 0; i < s.refine_iterations; ++i) {
    const double tm = 0.5 * (t0 + t1);
    (gap(tm) <= 0 ? t1 : t0) = tm;
  }
  const double t = t1;
  return {true, ux + t * d.x, uy + t * d.y, t * d.z};
}

/// True if the segment from the hit toward the light re-enters the surface
/// before leaving the slab.
inline bool in_shadow(const HeightfieldMaterial& m, const SurfaceHit& p, const Vec3& wi, const MarchSettings& s) {
  const double step = s.step_texels / m.resolution;
  const double eps = 1e-4 * m.height_scale;
  for (int i = 1; i <= s.max_steps; ++i) {
    const double t = i * step;
    const double z = p.z + t * wi.z;
    if (z >= 0) return false;
    if (z < m.surface_z(p.x + t * wi.x, p.y + t * wi.y) - eps) return true;
  }
  return false;
}

inline Rgb shade_reference(const HeightfieldMaterial& m, double ux, double uy, const Vec3& wi, const Vec3& wo,
                           const MarchSettings& s = {}, ShadeStats* stats = nullptr) {
  if (stats) ++stats->queries;
  if (wi.z <= 0) return {};
  const auto hit = march_view_ray(m, ux, uy, wo, s);
  if (!hit.hit) {
    if (stats) ++stats->misses;
    return {};
  }
  if (m.height_scale > 0 && in_shadow(m, hit, wi, s)) {
    if (stats) ++stats->shadowed;
    return {};
  }
  const Vec3 c = shade_point(m, hit.x, hit.y, m.normal_at(hit.x, hit.y), wi, wo);
  return {static_cast<float>(c.x), static_cast<float>(c.y), static_cast<float>(c.z)};
}

/// Reflected radiance at uv under direction pair (wi, wo), both given as
/// unit-disk projections of upper-hemisphere directions.
inline Rgb shade_reference(const HeightfieldMaterial& m, Vec2 u, Vec2 wi_disk, Vec2 wo_disk,
                           const MarchSettings& s = {}, ShadeStats* stats = nullptr) {
  return shade_reference(m, static_cast<double>(u.x), static_cast<double>(u.y), from_disk(wi_disk),
                         from_disk(wo_disk), s, stats);
}

}  // namespace neumat
