// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "neumat/data/dataset.hpp"
#include "neumat/model/material.hpp"
#include "neumat/util/hash.hpp"
#include "neumat/util/rng.hpp"

namespace neumat {

/// One in twenty dataset images is held out for validation.
inline bool is_holdout(std::uint32_t level, std::uint64_t image) {
  return hash_combine(hash_combine(0x5eed, level), image) % 20 == 0;
}

struct TileOrigin {
  std::uint32_t level = 0;
  std::uint64_t image = 0;
  std::uint32_t x0 = 0, y0 = 0;
};

/// Queries in tile order (tile, row, column) and the matching reference
/// radiance laid out as [tiles x 3 x h x w].
struct Batch {
  TileLayout layout;
  std::vector<Query7D> queries;
  std::vector<float> reference;
  std::vector<TileOrigin> origins;
};

/// Cuts coherent tiles from whole dataset images. Tiles wider than the level
/// extent wrap around the image; the material is periodic, so the wrapped
/// tile is still a valid image of the surface.
class BatchSampler {
 public:
  explicit BatchSampler(const Dataset& ds) : ds_(&ds) {
    images_.resize(ds.levels.size());
    for (std::uint32_t l = 0; l < ds.levels.size(); ++l) {
      for (std::uint64_t i = 0; i < ds.levels[l].image_count(); ++i) {
        if (!is_holdout(l, i)) images_[l].push_back(i);
      }
      mass_ += images_[l].size() * ds.levels[l].image_size();
    }
    if (mass_ == 0) throw std::invalid_argument("batch sampler: dataset has no training images");
  }

  const std::vector<std::uint64_t>& training_images(std::uint32_t level) const { return images_.at(level); }
  std::uint64_t training_samples() const { return mass_; }

  Batch make_batch(TrainRng& rng, TileLayout layout) const {
    if (layout.tiles == 0 || layout.height == 0 || layout.width == 0) throw std::invalid_argument("empty tile layout");
    Batch b;
    b.layout = layout;
    const std::size_t hw = layout.height * layout.width;
    b.queries.resize(layout.size());
    b.reference.resize(3 * layout.size());
    for (std::size_t t = 0; t < layout.tiles; ++t) {
      TileOrigin o;
      // Level chosen in proportion to its share of training samples.
      std::uint64_t pick = uniform_index(rng, mass_);
      for (o.level = 0;; ++o.level) {
        const std::uint64_t m = images_[o.level].size() * ds_->levels[o.level].image_size();
        if (pick < m) break;
        pick -= m;
      }
      const auto& lv = ds_->levels[o.level];
      o.image = images_[o.level][uniform_index(rng, images_[o.level].size())];
      o.x0 = static_cast<std::uint32_t>(uniform_index(rng, lv.extent));
      o.y0 = static_cast<std::uint32_t>(uniform_index(rng, lv.extent));
      const std::size_t base = o.image * lv.image_size();
      for (std::size_t y = 0; y < layout.height; ++y) {
        for (std::size_t x = 0; x < layout.width; ++x) {
          const std::size_t src = base + ((o.y0 + y) % lv.extent) * lv.extent + (o.x0 + x) % lv.extent;
          const std::size_t dst = t * hw + y * layout.width + x;
          b.queries[dst] = lv.queries[src];
          for (int c = 0; c < 3; ++c) b.reference[(t * 3 + c) * hw + y * layout.width + x] = lv.radiance[src][c];
        }
      }
      b.origins.push_back(o);
    }
    return b;
  }

 private:
  const Dataset* ds_;
  std::vector<std::vector<std::uint64_t>> images_;
  std::uint64_t mass_ = 0;
};

/// Model output for whole images of one level. The inception decoder sees
/// each image as one tile.
inline std::vector<Rgb> predict_images(const NeuralMaterial& model, const DatasetLevel& level,
                                       const std::vector<std::uint64_t>& images) {
  const std::size_t per = level.image_size();
  std::vector<Query7D> q;
  q.reserve(images.size() * per);
  for (auto i : images) q.insert(q.end(), level.queries.begin() + i * per, level.queries.begin() + (i + 1) * per);
  if (q.empty()) return {};
  return model.evaluate(q, {images.size(), level.extent, level.extent});
}

}  // namespace neumat
