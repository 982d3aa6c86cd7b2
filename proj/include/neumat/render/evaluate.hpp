// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "neumat/data/dataset.hpp"
#include "neumat/loss/loss.hpp"
#include "neumat/model/material.hpp"
#include "neumat/train/batch.hpp"
#include "neumat/util/image_io.hpp"

namespace neumat {

/// Error values are stored as plain MSE; the JSON form also carries the
/// x1e3 scaling used in published tables.
struct LevelError {
  std::uint32_t level = 0;
  std::uint64_t samples = 0;
  double mse = 0;
};

struct ErrorReport {
  std::vector<LevelError> levels;
  double overall_mse = 0;
  double l1 = 0;                 // mean |pred - ref| over all samples
  double gradient_loss = 0;      // mean remapped gradient term over images
  std::uint64_t queries = 0;
  double seconds = 0;
  std::string checkpoint, dataset;
  std::uint64_t dataset_hash = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["checkpoint"] = checkpoint;
    j["dataset"] = dataset;
    j["dataset_hash"] = dataset_hash;
    j["overall_mse_x1e3"] = overall_mse * 1e3;
    j["levels"] = nlohmann::ordered_json::array();
    for (const auto& l : levels) {
      nlohmann::ordered_json e;
      e["level"] = l.level;
      e["samples"] = l.samples;
      e["mse_x1e3"] = l.mse * 1e3;
      j["levels"].push_back(e);
    }
    j["loss_terms"] = {{"l1", l1}, {"gradient", gradient_loss}};
    j["runtime"] = {{"queries", queries}, {"seconds", seconds}};
    return j;
  }
};

/// Rejects datasets the checkpoint's pyramid cannot address.
inline void check_compatible(const MaterialConfig& arch, const Dataset& ds) {
  if (ds.base_resolution != arch.resolution || ds.levels.size() > arch.num_levels()) {
    throw std::invalid_argument("checkpoint/dataset mismatch: model pyramid is " + std::to_string(arch.resolution) +
                                "x" + std::to_string(arch.resolution) + " with " + std::to_string(arch.num_levels()) +
                                " levels, dataset is " + std::to_string(ds.base_resolution) + "x" +
                                std::to_string(ds.base_resolution) + " with " + std::to_string(ds.levels.size()) +
                                " levels");
  }
}

/// Absolute error heatmap (mean over channels), black through red and
/// yellow to white at `scale`.
inline Rgb8Image heatmap(const std::vector<Rgb>& pred, const std::vector<Rgb>& ref, std::uint32_t width,
                         std::uint32_t height, double scale) {
  Rgb8Image out{width, height, std::vector<std::uint8_t>(3ull * width * height)};
  for (std::size_t i = 0; i < static_cast<std::size_t>(width) * height; ++i) {
    double e = 0;
    for (int c = 0; c < 3; ++c) e += std::abs(static_cast<double>(pred[i][c]) - ref[i][c]);
    const double t = scale > 0 ? std::clamp(e / 3.0 / scale, 0.0, 1.0) : 0.0;
    const double r = std::clamp(3 * t, 0.0, 1.0), g = std::clamp(3 * t - 1, 0.0, 1.0), b = std::clamp(3 * t - 2, 0.0, 1.0);
    out.rgb[3 * i] = static_cast<std::uint8_t>(std::lround(r * 255));
    out.rgb[3 * i + 1] = static_cast<std::uint8_t>(std::lround(g * 255));
    out.rgb[3 * i + 2] = static_cast<std::uint8_t>(std::lround(b * 255));
  }
  return out;
}

struct EvalOptions {
  std::string heatmap_dir;  // when set, one heatmap per level (first image)
  double heatmap_scale = 0.1;
};

/// Per-level and overall MSE of `model` over every sample of `ds`.
inline ErrorReport evaluate_material(const NeuralMaterial& model, const Dataset& ds, const EvalOptions& opt = {}) {
  check_compatible(model.config(), ds);
  const auto t0 = std::chrono::steady_clock::now();
  ErrorReport rep;
  double l1_sum = 0, grad_sum = 0;
  std::size_t grad_images = 0;
  for (std::uint32_t l = 0; l < ds.levels.size(); ++l) {
    const auto& lv = ds.levels[l];
    std::vector<std::uint64_t> images(lv.image_count());
    for (std::size_t i = 0; i < images.size(); ++i) images[i] = i;
    const auto pred = predict_images(model, lv, images);
    double se = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(pred[i][c]) - lv.radiance[i][c];
        se += d * d;
        l1_sum += std::abs(d);
      }
    }
    rep.levels.push_back({l, lv.size(), pred.empty() ? 0.0 : se / (3.0 * static_cast<double>(pred.size()))});
    rep.queries += pred.size();
    if (lv.extent >= 3) {
      const std::size_t hw = lv.image_size();
      for (std::size_t k = 0; k < images.size(); ++k) {
        std::vector<float> a(3 * hw), b(3 * hw);
        for (std::size_t p = 0; p < hw; ++p) {
          for (int c = 0; c < 3; ++c) {
            a[c * hw + p] = pred[k * hw + p][c];
            b[c * hw + p] = lv.radiance[k * hw + p][c];
          }
        }
        ad::Tape<float> tape;
        const ad::Shape shape{1, 3, lv.extent, lv.extent};
        const auto pa = remap(tape, ad::Tensor<float>::constant(shape, std::move(a)));
        const auto pb = remap(tape, ad::Tensor<float>::constant(shape, std::move(b)));
        grad_sum += gradient_loss(tape, pa, pb).item();
        ++grad_images;
      }
    }
    if (!opt.heatmap_dir.empty() && !images.empty()) {
      std::filesystem::create_directories(opt.heatmap_dir);
      const std::vector<Rgb> p(pred.begin(), pred.begin() + lv.image_size());
      const std::vector<Rgb> r(lv.radiance.begin(), lv.radiance.begin() + lv.image_size());
      write_png((std::filesystem::path(opt.heatmap_dir) / ("heatmap_level" + std::to_string(l) + ".png")).string(),
                heatmap(p, r, lv.extent, lv.extent, opt.heatmap_scale));
    }
  }
  // Sample-weighted mean of the per-level values.
  double weighted = 0, samples = 0;
  for (const auto& e : rep.levels) {
    weighted += e.mse * static_cast<double>(e.samples);
    samples += static_cast<double>(e.samples);
  }
  rep.overall_mse = samples > 0 ? weighted / samples : 0.0;
  rep.l1 = rep.queries ? l1_sum / (3.0 * static_cast<double>(rep.queries)) : 0.0;
  rep.gradient_loss = grad_images ? grad_sum / static_cast<double>(grad_images) : 0.0;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace neumat
