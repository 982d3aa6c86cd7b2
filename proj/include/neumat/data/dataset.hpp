// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "neumat/data/shade.hpp"
#include "neumat/util/binary_io.hpp"
#include "neumat/util/hash.hpp"
#include "neumat/util/rng.hpp"

// Dataset file layout (little-endian):
//   "NMDS1"
//   u32       base resolution R
//   u32       level count
//   u64 x L   samples per level
//   u64       generator config hash
//   per level: f32 [u.x u.y wi.x wi.y wo.x wo.y lod] x N, then f32 [r g b] x N
//
// Samples at level l are stored as whole images of (R >> l)^2 queries in
// row-major order. Every image shares one (wi, wo) pair, which lets the
// trainer cut spatially coherent tiles out of it.
namespace neumat {

inline constexpr char kDatasetMagic[5] = {'N', 'M', 'D', 'S', '1'};
static_assert(sizeof(Rgb) == 3 * sizeof(float));

struct DatasetLevel {
  std::uint32_t extent = 0;  // image side at this level
  std::vector<Query7D> queries;
  std::vector<Rgb> radiance;

  std::size_t size() const { return queries.size(); }
  std::size_t image_size() const { return static_cast<std::size_t>(extent) * extent; }
  std::size_t image_count() const { return extent ? size() / image_size() : 0; }
};

struct Dataset {
  std::uint32_t base_resolution = 0;
  std::uint64_t generator_hash = 0;
  std::vector<DatasetLevel> levels;

  std::size_t total_samples() const {
    std::size_t n = 0;
    for (const auto& l : levels) n += l.size();
    return n;
  }

  void validate() const {
    if (base_resolution == 0 || !std::has_single_bit(base_resolution)) {
      throw std::invalid_argument("dataset: base resolution " + std::to_string(base_resolution) +
                                  " is not a power of two");
    }
    const auto max_levels = static_cast<std::size_t>(std::countr_zero(base_resolution)) + 1;
    if (levels.empty() || levels.size() > max_levels) {
      throw std::invalid_argument("dataset: " + std::to_string(levels.size()) + " levels, resolution " +
                                  std::to_string(base_resolution) + " allows 1.." + std::to_string(max_levels));
    }
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const auto& lv = levels[l];
      const std::string where = "dataset level " + std::to_string(l);
      if (lv.extent != (base_resolution >> l)) throw std::invalid_argument(where + ": wrong image extent");
      if (lv.queries.size() != lv.radiance.size()) throw std::invalid_argument(where + ": query/radiance mismatch");
      if (lv.size() % lv.image_size() != 0) {
        throw std::invalid_argument(where + ": " + std::to_string(lv.size()) + " samples is not a whole number of " +
                                    std::to_string(lv.extent) + "x" + std::to_string(lv.extent) + " images");
      }
      for (const auto& c : lv.radiance) {
        for (int k = 0; k < 3; ++k) {
          if (!std::isfinite(c[k]) || c[k] < 0) throw std::invalid_argument(where + ": invalid radiance value");
        }
      }
    }
  }
};

struct GenerateConfig {
  MaterialSpec material;
  std::uint32_t levels = 6;
  std::uint64_t base_samples = 1ull << 20;  // halves per level
  std::uint64_t seed = 1;
  MarchSettings march;
  unsigned threads = 0;  // 0: one per hardware thread

  /// Samples at level l, rounded down to whole images (at least one).
  std::uint64_t samples_at(std::uint32_t level) const {
    const std::uint64_t extent = material.resolution >> level;
    const std::uint64_t image = extent * extent;
    return std::max<std::uint64_t>(1, (base_samples >> level) / image) * image;
  }

  std::uint64_t hash(const HeightfieldMaterial& m) const {
    std::uint64_t h = hash_combine(m.hash(), fnv1a(material.kind));
    for (std::uint64_t v : {std::uint64_t{levels}, base_samples, seed, std::uint64_t{material.resolution},
                            static_cast<std::uint64_t>(march.refine_iterations),
                            static_cast<std::uint64_t>(march.max_steps),
                            std::bit_cast<std::uint64_t>(march.step_texels)}) {
      h = hash_combine(h, v);
    }
    return h;
  }
};

/// Cosine-weighted hemisphere direction as a uniform point on the unit disk.
inline Vec2 sample_disk(StreamRng& rng) {
  const double r = std::sqrt(rng.uniform()), phi = 2 * std::numbers::pi * rng.uniform();
  return {static_cast<float>(r * std::cos(phi)), static_cast<float>(r * std::sin(phi))};
}

/// Mean radiance over the level-l footprint centred at u: a 2^l x 2^l grid
/// of jittered level-0 sub-queries spanning 2^l texels per side.
inline Rgb prefiltered_radiance(const HeightfieldMaterial& m, double ux, double uy, const Vec3& wi, const Vec3& wo,
                                std::uint32_t level, StreamRng& rng, const MarchSettings& march = {},
                                ShadeStats* stats = nullptr) {
  if (level == 0) return shade_reference(m, ux, uy, wi, wo, march, stats);
  const std::size_t k = std::size_t{1} << level;
  const double width = static_cast<double>(k) / m.resolution;
  const double x0 = ux - 0.5 * width, y0 = uy - 0.5 * width;
  double acc[3] = {0, 0, 0};
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < k; ++i) {
      const double sx = x0 + (i + rng.uniform()) / k * width;
      const double sy = y0 + (j + rng.uniform()) / k * width;
      const Rgb c = shade_reference(m, sx - std::floor(sx), sy - std::floor(sy), wi, wo, march, stats);
      for (int ch = 0; ch < 3; ++ch) acc[ch] += c[ch];
    }
  }
  const double inv = 1.0 / static_cast<double>(k * k);
  return {static_cast<float>(acc[0] * inv), static_cast<float>(acc[1] * inv), static_cast<float>(acc[2] * inv)};
}

namespace detail {

inline constexpr std::uint64_t kImageStream = 0x1a4e;

/// Parameters shared by every sample of one dataset image.
struct ImageSetup {
  Vec2 wi, wo;
  double offset_x, offset_y;  // sub-texel grid offset in [0, 1)
};

inline ImageSetup image_setup(std::uint64_t seed, std::uint32_t level, std::uint64_t image) {
  StreamRng rng(seed, level, image, kImageStream);
  ImageSetup s;
  s.wi = sample_disk(rng);
  s.wo = sample_disk(rng);
  s.offset_x = rng.uniform();
  s.offset_y = rng.uniform();
  return s;
}

template <typename F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Generates one level. Each sample draws its jitter from a stream keyed by
/// (seed, level, index), so the result does not depend on thread count.
inline DatasetLevel generate_level(const HeightfieldMaterial& m, const GenerateConfig& cfg, std::uint32_t level,
                                   ShadeStats* stats = nullptr) {
  DatasetLevel out;
  out.extent = m.resolution >> level;
  if (out.extent == 0) throw std::invalid_argument("generate: level " + std::to_string(level) + " below 1x1");
  const std::size_t n = cfg.samples_at(level), per_image = out.image_size();
  out.queries.resize(n);
  out.radiance.resize(n);
  const std::size_t images = n / per_image;
  std::vector<ShadeStats> image_stats(images);
  detail::parallel_for(images, cfg.threads, [&](std::size_t img) {
    const auto setup = detail::image_setup(cfg.seed, level, img);
    const Vec3 wi = from_disk(setup.wi), wo = from_disk(setup.wo);
    for (std::size_t p = 0; p < per_image; ++p) {
      const std::size_t index = img * per_image + p;
      const std::size_t x = p % out.extent, y = p / out.extent;
      const double ux = (x + setup.offset_x) / out.extent, uy = (y + setup.offset_y) / out.extent;
      Query7D q{{static_cast<float>(ux), static_cast<float>(uy)}, setup.wi, setup.wo, static_cast<float>(level)};
      StreamRng rng(cfg.seed, level, index);
      out.queries[index] = q;
      out.radiance[index] = prefiltered_radiance(m, q.uv.x, q.uv.y, wi, wo, level, rng, cfg.march, &image_stats[img]);
    }
  });
  if (stats) {
    for (const auto& s : image_stats) {
      stats->queries += s.queries;
      stats->misses += s.misses;
      stats->shadowed += s.shadowed;
    }
  }
  return out;
}

inline Dataset generate(const HeightfieldMaterial& m, const GenerateConfig& cfg, ShadeStats* stats = nullptr) {
  m.validate();
  if (m.resolution != cfg.material.resolution) throw std::invalid_argument("generate: material resolution mismatch");
  const auto max_levels = static_cast<std::uint32_t>(std::countr_zero(m.resolution)) + 1;
  if (cfg.levels == 0 || cfg.levels > max_levels) {
    throw std::invalid_argument("generate: " + std::to_string(cfg.levels) + " levels requested, resolution " +
                                std::to_string(m.resolution) + " supports 1.." + std::to_string(max_levels));
  }
  Dataset ds;
  ds.base_resolution = m.resolution;
  ds.generator_hash = cfg.hash(m);
  for (std::uint32_t l = 0; l < cfg.levels; ++l) ds.levels.push_back(generate_level(m, cfg, l, stats));
  return ds;
}

inline Dataset generate(const GenerateConfig& cfg, ShadeStats* stats = nullptr) {
  return generate(cfg.material.build(), cfg, stats);
}

inline std::string serialize_dataset(const Dataset& ds) {
  std::ostringstream os(std::ios::binary);
  io::write_bytes(os, kDatasetMagic, sizeof kDatasetMagic);
  io::write_u32(os, ds.base_resolution);
  io::write_u32(os, static_cast<std::uint32_t>(ds.levels.size()));
  for (const auto& l : ds.levels) io::write_u64(os, l.size());
  io::write_u64(os, ds.generator_hash);
  for (const auto& l : ds.levels) {
    std::vector<float> q(7 * l.size());
    for (std::size_t i = 0; i < l.size(); ++i) {
      const auto p = l.queries[i].packed();
      std::copy(p.begin(), p.end(), q.begin() + 7 * i);
    }
    io::write_f32s(os, q);
    io::write_f32s(os, std::span(reinterpret_cast<const float*>(l.radiance.data()), 3 * l.size()));
  }
  return os.str();
}

inline Dataset parse_dataset(std::span<const std::byte> bytes, const std::string& what = "dataset") {
  io::Reader r(bytes, what);
  char magic[5];
  r.read(magic, 5, "magic");
  if (std::memcmp(magic, kDatasetMagic, 4) != 0) throw FormatError(what + ": not a dataset file (bad magic)");
  if (magic[4] != kDatasetMagic[4]) {
    throw FormatError(what + ": unsupported dataset version '" + std::string(1, magic[4]) + "'");
  }
  Dataset ds;
  ds.base_resolution = r.u32("base resolution");
  const auto count = r.u32("level count");
  if (count == 0 || count > 32) throw FormatError(what + ": implausible level count " + std::to_string(count));
  std::vector<std::uint64_t> sizes(count);
  for (auto& s : sizes) s = r.u64("level sample count");
  ds.generator_hash = r.u64("generator hash");
  std::uint64_t expected = r.position();
  for (auto s : sizes) expected += s * 40;
  if (expected != bytes.size()) {
    throw FormatError(what + ": truncated or oversized: header promises " + std::to_string(expected) +
                      " bytes, file has " + std::to_string(bytes.size()));
  }
  ds.levels.resize(count);
  for (std::uint32_t l = 0; l < count; ++l) {
    auto& lv = ds.levels[l];
    lv.extent = ds.base_resolution >> l;
    std::vector<float> q(7 * sizes[l]);
    r.f32s(q, "queries");
    lv.queries.resize(sizes[l]);
    for (std::size_t i = 0; i < sizes[l]; ++i) lv.queries[i] = Query7D::unpack(q.data() + 7 * i);
    lv.radiance.resize(sizes[l]);
    r.f32s(std::span(reinterpret_cast<float*>(lv.radiance.data()), 3 * sizes[l]), "radiance");
  }
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(what + ": " + e.what());
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  io::write_file_atomic(path, serialize_dataset(ds));
}

inline Dataset load_dataset(const std::string& path) { return parse_dataset(io::read_file(path), path); }

/// Content hash of the serialized dataset.
inline std::uint64_t dataset_hash(const Dataset& ds) { return fnv1a(serialize_dataset(ds)); }

}  // namespace neumat
