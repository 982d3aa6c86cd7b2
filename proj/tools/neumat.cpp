// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: dataset generation, training, rendering,
// evaluation and the ablation suite.
//
// Exit status: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "neumat/render/ablation.hpp"
#include "neumat/render/evaluate.hpp"
#include "neumat/render/render.hpp"
#include "neumat/train/trainer.hpp"

#ifndef NEUMAT_GIT_DESCRIBE
#define NEUMAT_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_manifest(const fs::path& path, const std::string& command, const ordered_json& config, std::uint64_t seed,
                    std::uint64_t dataset_hash) {
  ordered_json j;
  j["command"] = command;
  j["git_describe"] = NEUMAT_GIT_DESCRIBE;
  j["seed"] = seed;
  j["dataset_hash"] = hex64(dataset_hash);
  j["config"] = config;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << "\n";
}

ordered_json config_json(const neumat::TrainConfig& c) {
  ordered_json j;
  for (const auto& [k, v] : c.entries()) j[k] = v;
  return j;
}

// Every training key as a --flag; values given on the command line are
// applied after the config file.
struct TrainFlags {
  std::string file;
  std::map<std::string, std::pair<CLI::Option*, std::string>> keys;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "Config file of key = value lines");
    for (const auto& [k, v] : neumat::TrainConfig{}.entries()) {
      auto& slot = keys[k];
      std::string flag = "--" + k;
      std::replace(flag.begin(), flag.end(), '_', '-');
      slot.first = app->add_option(flag, slot.second, "Config key " + k + " (default " + (v.empty() ? "unset" : v) + ")");
    }
  }

  neumat::TrainConfig resolve(neumat::TrainConfig base = {}) const {
    if (!file.empty()) base = neumat::load_config_file(file, base);
    for (const auto& [k, slot] : keys) {
      if (slot.first->count() > 0) base.set(k, slot.second);
    }
    return base;
  }
};

struct MaterialFlags {
  neumat::MaterialSpec spec;
  void attach(CLI::App* app) {
    app->add_option("--material", spec.kind, "Heightfield material: bumps, woven, flat or png")->capture_default_str();
    app->add_option("--image", spec.image_path, "Grayscale height PNG for --material png");
    app->add_option("--resolution", spec.resolution, "Base resolution (power of two)")->capture_default_str();
    app->add_option("--material-seed", spec.seed, "Seed of the procedural material")->capture_default_str();
  }
};

struct GenFlags {
  neumat::GenerateConfig cfg;
  void attach(CLI::App* app, const std::string& threads_flag = "--threads") {
    app->add_option("--levels", cfg.levels, "Number of levels of detail")->capture_default_str();
    app->add_option("--base-samples", cfg.base_samples, "Samples at level 0, halved per level")->capture_default_str();
    app->add_option(threads_flag, cfg.threads, "Generator worker threads, 0 for all cores")->capture_default_str();
  }
};

struct SceneFlags {
  neumat::SceneConfig scene;
  std::string geometry = "quad";
  std::vector<double> camera, light;
  bool ortho = false;
  void attach(CLI::App* app) {
    app->add_option("--geometry", geometry, "quad or sphere")->capture_default_str();
    app->add_option("--camera", camera, "Camera position x y z")->expected(3);
    app->add_option("--light", light, "Direction toward the light x y z")->expected(3);
    app->add_option("--width", scene.width, "Image width")->capture_default_str();
    app->add_option("--height", scene.height, "Image height")->capture_default_str();
    app->add_option("--spp", scene.spp, "Samples per pixel")->capture_default_str();
    app->add_option("--fov", scene.fov_degrees, "Vertical field of view in degrees")->capture_default_str();
    app->add_option("--tiling", scene.uv_tiling, "Texture repeats across the surface")->capture_default_str();
    app->add_option("--render-seed", scene.seed, "Seed of the pixel jitter")->capture_default_str();
    app->add_flag("--ortho", ortho, "Orthographic projection");
  }
  neumat::SceneConfig resolve() const {
    auto s = scene;
    s.geometry = neumat::parse_geometry(geometry);
    if (camera.size() == 3) s.camera = {camera[0], camera[1], camera[2]};
    if (light.size() == 3) s.light_direction = {light[0], light[1], light[2]};
    if (ortho) s.projection = neumat::Projection::orthographic;
    s.validate();
    return s;
  }
};

void save_image(const std::string& prefix, const neumat::Image& img) {
  const fs::path p(prefix);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  neumat::write_pfm(prefix + ".pfm", img);
  neumat::write_png(prefix + ".png", neumat::preview(img));
}

int run_gen_data(const MaterialFlags& mf, GenFlags gf, std::uint64_t seed, const std::string& out) {
  gf.cfg.material = mf.spec;
  gf.cfg.seed = seed;
  neumat::ShadeStats stats;
  const auto ds = neumat::generate(gf.cfg, &stats);
  neumat::save_dataset(ds, out);
  const auto h = neumat::dataset_hash(ds);
  ordered_json cfg = {{"material", mf.spec.kind},       {"image", mf.spec.image_path},
                      {"resolution", mf.spec.resolution}, {"material_seed", mf.spec.seed},
                      {"levels", gf.cfg.levels},          {"base_samples", gf.cfg.base_samples},
                      {"output", out}};
  write_manifest(out + ".manifest.json", "gen-data", cfg, seed, h);
  std::cout << "samples " << ds.total_samples() << " misses " << stats.misses << " shadowed " << stats.shadowed << "\n";
  std::cout << "dataset_hash " << hex64(h) << "\n";
  return 0;
}

int run_train(neumat::TrainConfig cfg, const neumat::Checkpoint* from) {
  if (cfg.dataset.empty()) throw CLI::ValidationError("--dataset", "a dataset is required");
  if (cfg.output_dir.empty()) throw CLI::ValidationError("--output-dir", "an output directory is required");
  const auto ds = neumat::load_dataset(cfg.dataset);
  const auto h = neumat::dataset_hash(ds);
  fs::create_directories(cfg.output_dir);
  std::ofstream(fs::path(cfg.output_dir) / "config.txt") << neumat::format_config(cfg);
  write_manifest(fs::path(cfg.output_dir) / "manifest.json", from ? "resume" : "train", config_json(cfg), cfg.seed, h);
  neumat::Trainer t = from ? neumat::Trainer(cfg, ds, *from) : neumat::Trainer(cfg, ds);
  t.set_log(&std::cout);
  t.run();
  std::cout << "checkpoint " << t.checkpoint_path() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural reflectance materials: data generation, training, rendering and evaluation", "neumat"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out;
  MaterialFlags gen_material;
  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a multi-level reference dataset");
  gen_material.attach(gen_cmd);
  gen.attach(gen_cmd);
  gen_cmd->add_option("--seed", seed, "Sampling seed")->capture_default_str();
  gen_cmd->add_option("-o,--out", out, "Output dataset file")->required();

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a neural material on a dataset");
  train_flags.attach(train_cmd);

  TrainFlags resume_flags;
  std::string resume_ckpt;
  auto* resume_cmd = app.add_subcommand("resume", "Continue training from a checkpoint");
  resume_cmd->add_option("--checkpoint", resume_ckpt, "Checkpoint to continue")->required();
  resume_flags.attach(resume_cmd);

  std::string render_ckpt, render_out = "render";
  bool render_reference = false;
  MaterialFlags render_material;
  SceneFlags render_scene;
  auto* render_cmd = app.add_subcommand("render", "Render a checkpoint (or the reference material) to PFM and PNG");
  render_cmd->add_option("--checkpoint", render_ckpt, "Trained material");
  render_cmd->add_flag("--reference", render_reference, "Render the heightfield reference instead of a checkpoint");
  render_material.attach(render_cmd);
  render_scene.attach(render_cmd);
  render_cmd->add_option("-o,--out", render_out, "Output prefix (.pfm and .png are appended)")->capture_default_str();

  std::string eval_ckpt, eval_ds, eval_out, eval_heatmaps;
  auto* eval_cmd = app.add_subcommand("eval", "Per-level error report of a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Trained material")->required();
  eval_cmd->add_option("--dataset", eval_ds, "Evaluation dataset")->required();
  eval_cmd->add_option("-o,--out", eval_out, "JSON report path (stdout if unset)");
  eval_cmd->add_option("--heatmaps", eval_heatmaps, "Directory for per-level error heatmaps");

  TrainFlags ablate_flags;
  MaterialFlags ablate_material;
  GenFlags ablate_gen;
  std::uint64_t ablate_data_seed = 1, ablate_eval_seed = 99;
  std::string ablate_eval_ds;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train the four cumulative configurations and compare them");
  ablate_flags.attach(ablate_cmd);
  ablate_material.attach(ablate_cmd);
  ablate_gen.attach(ablate_cmd, "--gen-threads");
  ablate_cmd->add_option("--eval-dataset", ablate_eval_ds, "Evaluation dataset (generated if unset)");
  ablate_cmd->add_option("--data-seed", ablate_data_seed, "Seed of a generated training dataset")->capture_default_str();
  ablate_cmd->add_option("--eval-seed", ablate_eval_seed, "Seed of a generated evaluation dataset")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen_material, gen, seed, out);
    if (*train_cmd) return run_train(train_flags.resolve(), nullptr);
    if (*resume_cmd) {
      const auto ckpt = neumat::load_checkpoint(resume_ckpt);
      neumat::TrainConfig base;
      const auto saved = fs::path(resume_ckpt).parent_path() / "config.txt";
      if (resume_flags.file.empty() && fs::exists(saved)) base = neumat::load_config_file(saved.string());
      return run_train(resume_flags.resolve(base), &ckpt);
    }
    if (*render_cmd) {
      const auto scene = render_scene.resolve();
      neumat::Image img;
      std::uint64_t h = 0;
      if (render_reference) {
        const auto m = render_material.spec.build();
        img = neumat::render_reference(scene, m, static_cast<std::uint32_t>(std::countr_zero(m.resolution)) + 1);
        h = m.hash();
      } else {
        if (render_ckpt.empty()) throw CLI::RequiredError("--checkpoint (or --reference)");
        img = neumat::render(scene, neumat::load_checkpoint(render_ckpt).material());
      }
      save_image(render_out, img);
      ordered_json cfg = {{"checkpoint", render_ckpt}, {"reference", render_reference}, {"geometry", render_scene.geometry},
                          {"width", scene.width},      {"height", scene.height},        {"spp", scene.spp},
                          {"tiling", scene.uv_tiling}};
      write_manifest(render_out + ".manifest.json", "render", cfg, scene.seed, h);
      std::cout << "wrote " << render_out << ".pfm and " << render_out << ".png\n";
      return 0;
    }
    if (*eval_cmd) {
      const auto model = neumat::load_checkpoint(eval_ckpt).material();
      const auto ds = neumat::load_dataset(eval_ds);
      auto rep = neumat::evaluate_material(model, ds, {eval_heatmaps, 0.1});
      rep.checkpoint = eval_ckpt;
      rep.dataset = eval_ds;
      rep.dataset_hash = neumat::dataset_hash(ds);
      const auto text = rep.to_json().dump(2);
      if (eval_out.empty()) {
        std::cout << text << "\n";
      } else {
        if (fs::path(eval_out).has_parent_path()) fs::create_directories(fs::path(eval_out).parent_path());
        std::ofstream(eval_out) << text << "\n";
        write_manifest(eval_out + ".manifest.json", "eval", {{"checkpoint", eval_ckpt}, {"dataset", eval_ds}}, 0,
                       rep.dataset_hash);
        std::cout << "overall_mse_x1e3 " << rep.overall_mse * 1e3 << "\n";
      }
      return 0;
    }
    if (*ablate_cmd) {
      auto base = ablate_flags.resolve();
      if (base.output_dir.empty()) throw CLI::ValidationError("--output-dir", "an output directory is required");
      const auto material = ablate_material.spec.build();
      auto gcfg = ablate_gen.cfg;
      gcfg.material = ablate_material.spec;
      neumat::Dataset train_ds, eval_ds;
      if (!base.dataset.empty()) {
        train_ds = neumat::load_dataset(base.dataset);
      } else {
        gcfg.seed = ablate_data_seed;
        train_ds = neumat::generate(material, gcfg);
      }
      if (!ablate_eval_ds.empty()) {
        eval_ds = neumat::load_dataset(ablate_eval_ds);
      } else {
        gcfg.seed = ablate_eval_seed;
        gcfg.base_samples = std::max<std::uint64_t>(gcfg.base_samples / 4, 1);
        eval_ds = neumat::generate(material, gcfg);
      }
      write_manifest(fs::path(base.output_dir) / "manifest.json", "ablate", config_json(base), base.seed,
                     neumat::dataset_hash(train_ds));
      const auto rep = neumat::run_ablation(train_ds, eval_ds, material, base, neumat::SceneConfig::probe(), &std::cout);
      for (const auto& c : rep.columns) {
        std::cout << c.name << " mse_x1e3 " << c.report.overall_mse * 1e3 << (c.aborted ? " (aborted)" : "") << "\n";
      }
      return rep.partial ? 2 : 0;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const neumat::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
