// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "neumat/data/dataset.hpp"
#include "neumat/model/material.hpp"
#include "neumat/render/scene.hpp"
#include "neumat/util/image_io.hpp"
#include "neumat/util/rng.hpp"

namespace neumat {

/// One camera sample: the material query it produces, or a miss.
struct PixelQuery {
  bool hit = false;  // ray reached the geometry from the front
  bool lit = false;  // light above the local horizon
  Query7D query;
};

/// Footprint of one pixel step in texels, from the uv of neighbouring rays.
inline double footprint_texels(const SceneConfig& s, const Camera& cam, const SurfaceSample& h, double x, double y,
                               std::uint32_t resolution) {
  auto uv_delta = [&](double dx, double dy) -> double {
    auto n = intersect(s, cam.ray(x + dx, y + dy), true);
    if (!n) n = intersect(s, cam.ray(x - dx, y - dy), true);
    if (!n) return 0.0;
    double du = n->u - h.u, dv = n->v - h.v;
    if (s.geometry == Geometry::sphere) du -= s.uv_tiling * std::round(du / s.uv_tiling);
    return std::sqrt(du * du + dv * dv);
  };
  return std::max(uv_delta(1.0, 0.0), uv_delta(0.0, 1.0)) * resolution;
}

/// Material query for a camera ray through continuous pixel position (x, y).
inline PixelQuery pixel_query(const SceneConfig& s, const Camera& cam, double x, double y, std::uint32_t resolution,
                              std::uint32_t num_levels) {
  PixelQuery out;
  const Ray r = cam.ray(x, y);
  const auto h = intersect(s, r);
  if (!h) return out;
  const Vec3 wo = to_local(*h, r.dir * -1.0);
  if (wo.z <= 0) return out;
  out.hit = true;
  const Vec3 wi = to_local(*h, normalize(s.light_direction));
  out.lit = wi.z > 0;
  out.query.uv = {static_cast<float>(h->u - std::floor(h->u)), static_cast<float>(h->v - std::floor(h->v))};
  out.query.wi = to_disk(out.lit ? wi : Vec3{wi.x, wi.y, 0.0});
  out.query.wo = to_disk(wo);
  out.query.lod = lod_from_kernel(footprint_texels(s, cam, *h, x, y, resolution), static_cast<int>(num_levels));
  return out;
}

/// All camera samples for a scene in layout [spp x height x width]. Sample 0
/// sits at the pixel centre; further samples use a fixed per-pixel jitter.
inline std::vector<PixelQuery> scene_queries(const SceneConfig& s, std::uint32_t resolution, std::uint32_t num_levels) {
  s.validate();
  const Camera cam(s);
  std::vector<PixelQuery> out(static_cast<std::size_t>(s.spp) * s.width * s.height);
  for (std::uint32_t k = 0; k < s.spp; ++k) {
    for (std::uint32_t y = 0; y < s.height; ++y) {
      for (std::uint32_t x = 0; x < s.width; ++x) {
        double jx = 0.5, jy = 0.5;
        if (k > 0) {
          StreamRng rng(s.seed, static_cast<std::uint64_t>(y) * s.width + x, k);
          jx = rng.uniform();
          jy = rng.uniform();
        }
        out[(static_cast<std::size_t>(k) * s.height + y) * s.width + x] =
            pixel_query(s, cam, x + jx, y + jy, resolution, num_levels);
      }
    }
  }
  return out;
}

namespace detail {

/// Averages per-sample radiance into pixels; misses take the background.
inline Image resolve(const SceneConfig& s, const std::vector<PixelQuery>& pq, const std::vector<Rgb>& radiance) {
  Image img(s.width, s.height);
  const std::size_t plane = static_cast<std::size_t>(s.width) * s.height;
  for (std::size_t p = 0; p < plane; ++p) {
    double acc[3] = {0, 0, 0};
    for (std::uint32_t k = 0; k < s.spp; ++k) {
      const std::size_t i = k * plane + p;
      if (!pq[i].hit) {
        for (int ch = 0; ch < 3; ++ch) acc[ch] += s.background[ch];
      } else if (pq[i].lit) {
        for (int ch = 0; ch < 3; ++ch) acc[ch] += radiance[i][ch] * s.light_intensity;
      }
    }
    for (int ch = 0; ch < 3; ++ch) img.rgb[3 * p + ch] = static_cast<float>(acc[ch] / s.spp);
  }
  return img;
}

}  // namespace detail

/// Renders a neural material under direct illumination. All queries are
/// evaluated as one batch; for the inception decoder each sample plane is
/// one image tile.
inline Image render(const SceneConfig& s, const NeuralMaterial& model) {
  const auto& cfg = model.config();
  const auto pq = scene_queries(s, cfg.resolution, static_cast<std::uint32_t>(cfg.num_levels()));
  std::vector<Query7D> q(pq.size());
  for (std::size_t i = 0; i < pq.size(); ++i) q[i] = pq[i].hit ? pq[i].query : Query7D{};
  const auto radiance = model.evaluate(q, {s.spp, s.height, s.width});
  return detail::resolve(s, pq, radiance);
}

/// Ground truth for the same scene: each camera sample is shaded by the
/// heightfield oracle, prefiltered over the sample's level-of-detail footprint.
inline Image render_reference(const SceneConfig& s, const HeightfieldMaterial& m, std::uint32_t num_levels,
                              const MarchSettings& march = {}) {
  const auto pq = scene_queries(s, m.resolution, num_levels);
  std::vector<Rgb> radiance(pq.size());
  for (std::size_t i = 0; i < pq.size(); ++i) {
    if (!pq[i].hit || !pq[i].lit) continue;
    const auto& q = pq[i].query;
    StreamRng rng(s.seed, i, 0x4ef);
    radiance[i] = prefiltered_radiance(m, q.uv.x, q.uv.y, from_disk(q.wi), from_disk(q.wo),
                                       static_cast<std::uint32_t>(std::lround(q.lod)), rng, march);
  }
  return detail::resolve(s, pq, radiance);
}

/// Mean squared error over all pixels and channels.
inline double image_mse(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("image_mse: extent mismatch");
  double se = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
    se += d * d;
  }
  return a.rgb.empty() ? 0.0 : se / static_cast<double>(a.rgb.size());
}

}  // namespace neumat
