// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "neumat/render/evaluate.hpp"
#include "neumat/render/render.hpp"
#include "neumat/train/trainer.hpp"

namespace neumat {

/// Column names of the cumulative ablation, left to right.
inline constexpr std::array<const char*, 4> kAblationColumns = {"baseline", "+encoding", "+gradient_loss",
                                                                "+remap"};

/// The four cumulative configurations derived from `base`: switches are
/// enabled one at a time in column order, everything else is shared.
inline std::vector<TrainConfig> ablation_configs(const TrainConfig& base) {
  std::vector<TrainConfig> out;
  for (int k = 0; k < 4; ++k) {
    TrainConfig c = base;
    c.decoder = DecoderKind::mlp;
    c.encoding = k >= 1;
    c.gradient_loss = k >= 2;
    c.remap = k >= 3;
    if (!base.output_dir.empty()) c.output_dir = (std::filesystem::path(base.output_dir) / kAblationColumns[k]).string();
    out.push_back(c);
  }
  return out;
}

struct AblationColumn {
  std::string name;
  std::uint64_t config_hash = 0;
  bool aborted = false;
  std::string error;
  ErrorReport report;       // on the evaluation dataset
  double probe_mse = 0;     // probe render against the reference render
  Image probe;
};

struct AblationReport {
  std::vector<AblationColumn> columns;
  Image reference;
  bool partial = false;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["partial"] = partial;
    j["columns"] = nlohmann::ordered_json::array();
    for (const auto& c : columns) {
      nlohmann::ordered_json e;
      e["name"] = c.name;
      e["config_hash"] = c.config_hash;
      e["aborted"] = c.aborted;
      if (c.aborted) e["error"] = c.error;
      e["mse_x1e3"] = c.report.overall_mse * 1e3;
      e["probe_mse_x1e3"] = c.probe_mse * 1e3;
      e["levels_mse_x1e3"] = nlohmann::ordered_json::array();
      for (const auto& l : c.report.levels) e["levels_mse_x1e3"].push_back(l.mse * 1e3);
      j["columns"].push_back(e);
    }
    j["probe"] = "4x deterministic jitter per pixel stands in for high sample-count references";
    return j;
  }
};

/// Side-by-side tone-mapped montage with a 4 pixel gap between panels.
inline Rgb8Image montage(const std::vector<const Image*>& panels) {
  constexpr std::uint32_t kGap = 4;
  std::uint32_t w = 0, h = 0;
  for (const auto* p : panels) {
    w += p->width;
    h = std::max(h, p->height);
  }
  w += kGap * static_cast<std::uint32_t>(panels.size() > 0 ? panels.size() - 1 : 0);
  Rgb8Image out{w, h, std::vector<std::uint8_t>(3ull * w * h, 255)};
  std::uint32_t x0 = 0;
  for (const auto* p : panels) {
    const auto pv = preview(*p);
    for (std::uint32_t y = 0; y < p->height; ++y) {
      std::copy_n(pv.rgb.begin() + 3ull * y * p->width, 3ull * p->width, out.rgb.begin() + 3ull * (y * w + x0));
    }
    x0 += p->width + kGap;
  }
  return out;
}

/// Trains the four cumulative configurations, evaluates each on `eval`, and
/// renders the probe scene next to the reference. A failed column is kept
/// in the report, flagged, and the report marked partial.
inline AblationReport run_ablation(const Dataset& train_ds, const Dataset& eval_ds, const HeightfieldMaterial& material,
                                   const TrainConfig& base, const SceneConfig& probe = SceneConfig::probe(),
                                   std::ostream* log = nullptr) {
  AblationReport rep;
  const auto levels = static_cast<std::uint32_t>(std::countr_zero(material.resolution)) + 1;
  rep.reference = render_reference(probe, material, levels);
  const auto configs = ablation_configs(base);
  for (std::size_t k = 0; k < configs.size(); ++k) {
    AblationColumn col;
    col.name = kAblationColumns[k];
    col.config_hash = configs[k].hash(train_ds.generator_hash);
    if (log) *log << "ablation column " << col.name << "\n";
    try {
      Trainer t(configs[k], train_ds);
      t.set_log(log);
      t.run();
      col.report = evaluate_material(t.material(), eval_ds);
      col.probe = render(probe, t.material());
      col.probe_mse = image_mse(col.probe, rep.reference);
    } catch (const std::exception& e) {
      col.aborted = true;
      col.error = e.what();
      col.probe = Image(probe.width, probe.height);
      rep.partial = true;
    }
    rep.columns.push_back(std::move(col));
  }
  if (!base.output_dir.empty()) {
    const std::filesystem::path dir(base.output_dir);
    std::filesystem::create_directories(dir);
    std::vector<const Image*> panels;
    for (const auto& c : rep.columns) panels.push_back(&c.probe);
    panels.push_back(&rep.reference);
    write_png((dir / "ablation_strip.png").string(), montage(panels));
    std::ofstream(dir / "ablation_report.json") << rep.to_json().dump(2) << "\n";
  }
  return rep;
}

}  // namespace neumat
