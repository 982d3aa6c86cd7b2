// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "neumat/autodiff/adam.hpp"
#include "neumat/loss/loss.hpp"
#include "neumat/model/checkpoint.hpp"
#include "neumat/train/batch.hpp"
#include "neumat/train/config.hpp"

namespace neumat {

struct LossRecord {
  std::uint64_t iteration = 0;
  double total = 0, l1 = 0, gradient = 0;
};

struct ValidationRecord {
  std::uint64_t iteration = 0;
  double mse = 0;
};

/// Training diverged. The last checkpoint written before the failure (if
/// any) is left untouched on disk.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, std::uint64_t iteration, std::string last_checkpoint)
      : std::runtime_error(what), iteration_(iteration), last_checkpoint_(std::move(last_checkpoint)) {}
  std::uint64_t iteration() const { return iteration_; }
  const std::string& last_checkpoint() const { return last_checkpoint_; }

 private:
  std::uint64_t iteration_;
  std::string last_checkpoint_;
};

struct TrainObserver {
  /// Called with accumulated gradients before each optimizer step.
  std::function<void(std::uint64_t iteration, const ad::ParameterSet& params)> on_gradients;
  std::function<void(const LossRecord&)> on_step;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, const Dataset& ds)
      : cfg_(std::move(cfg)),
        ds_(&ds),
        sampler_(ds),
        model_((cfg_.validate(), cfg_.material(ds.base_resolution)), cfg_.seed),
        rng_(hash_combine(cfg_.seed, 0x7a1e)),
        adam_(ad::AdamState::zeros_like(model_.parameters())),
        config_hash_(cfg_.hash(ds.generator_hash)) {
    check_dataset();
  }

  /// Continues from `ckpt`; the configuration and dataset must hash to the
  /// value recorded when the checkpoint was written.
  Trainer(TrainConfig cfg, const Dataset& ds, const Checkpoint& ckpt) : Trainer(std::move(cfg), ds) {
    if (ckpt.arch != model_.config()) {
      throw ConfigError("checkpoint architecture " + ckpt.arch.describe() + " does not match configuration " +
                        model_.config().describe());
    }
    if (ckpt.config_hash != config_hash_) {
      throw ConfigError("checkpoint was written under a different training configuration or dataset "
                        "(config hash " + hex(ckpt.config_hash) + ", current " + hex(config_hash_) +
                        "); seed, switches, optimizer and tile settings must match");
    }
    if (!ckpt.optimizer) throw ConfigError("checkpoint has no optimizer state; cannot resume");
    model_ = ckpt.material();
    adam_ = *ckpt.optimizer;
    rng_ = deserialize_rng(ckpt.rng_state);
    iteration_ = ckpt.iteration;
  }

  const TrainConfig& config() const { return cfg_; }
  std::uint64_t iteration() const { return iteration_; }
  std::uint64_t config_hash() const { return config_hash_; }
  const NeuralMaterial& material() const { return model_; }
  const BatchSampler& sampler() const { return sampler_; }
  const std::vector<LossRecord>& history() const { return history_; }
  const std::vector<ValidationRecord>& validations() const { return validations_; }
  void set_log(std::ostream* log) { log_ = log; }

  /// Current loss terms and gradients for one batch, accumulated into the
  /// parameter gradient buffers.
  LossRecord accumulate(const Batch& b) {
    const std::size_t groups = std::min<std::size_t>(cfg_.threads, b.layout.tiles);
    const std::size_t hw = b.layout.height * b.layout.width;
    std::vector<LossRecord> parts(groups);
    std::vector<std::vector<ad::Tensor<float>>> leaves(groups);
    std::vector<std::exception_ptr> errors(groups);
    auto run_group = [&](std::size_t g) {
      try {
        const std::size_t t0 = b.layout.tiles * g / groups, t1 = b.layout.tiles * (g + 1) / groups;
        const std::size_t nt = t1 - t0, n = nt * hw;
        leaves[g] = model_.parameters().bind<float>(true);
        ad::Tape<float> tape;
        const std::span<const Query7D> q(b.queries.data() + t0 * hw, n);
        const auto rgb = model_.forward(tape, leaves[g], q, {nt, b.layout.height, b.layout.width});
        const auto pred = ad::reshape(
            tape, ad::transpose_last2(tape, ad::reshape(tape, rgb, {nt, hw, 3})), {nt, 3, b.layout.height, b.layout.width});
        const auto ref = ad::Tensor<float>::constant(
            pred.shape(), std::vector<float>(b.reference.begin() + 3 * t0 * hw, b.reference.begin() + 3 * t1 * hw));
        const auto terms = combined_loss(tape, pred, ref, cfg_.loss());
        const double share = static_cast<double>(nt) / static_cast<double>(b.layout.tiles);
        tape.backward(groups == 1 ? terms.total : ad::scale(tape, terms.total, share));
        parts[g] = {0, share * terms.total.item(), share * terms.l1, share * terms.gradient};
      } catch (...) {
        errors[g] = std::current_exception();
      }
    };
    if (groups == 1) {
      run_group(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t g = 0; g < groups; ++g) pool.emplace_back(run_group, g);
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    LossRecord r;
    for (std::size_t g = 0; g < groups; ++g) {  // fixed reduction order
      model_.parameters().accumulate_grads(leaves[g]);
      r.total += parts[g].total;
      r.l1 += parts[g].l1;
      r.gradient += parts[g].gradient;
    }
    return r;
  }

  /// One optimizer iteration.
  LossRecord step(const TrainObserver* obs = nullptr) {
    const auto batch = sampler_.make_batch(rng_, {cfg_.tiles, cfg_.tile_height, cfg_.tile_width});
    LossRecord r = accumulate(batch);
    r.iteration = ++iteration_;
    if (!std::isfinite(r.total)) throw ad::NumericError("non-finite training loss");
    if (obs && obs->on_gradients) obs->on_gradients(r.iteration, model_.parameters());
    ad::adam_step(model_.parameters(), adam_, cfg_.adam());
    for (const auto& p : model_.parameters()) {
      if (!ad::all_finite<float>(p.value)) throw ad::NumericError("non-finite weights in '" + p.name + "' after update");
    }
    history_.push_back(r);
    if (obs && obs->on_step) obs->on_step(r);
    return r;
  }

  /// Trains to the configured budget, validating and checkpointing every
  /// period. A numeric failure aborts the run; the last checkpoint stays.
  void run(const TrainObserver* obs = nullptr) {
    const auto total = cfg_.total_iterations();
    if (log_ && iteration_ == 0) {
      *log_ << "note: tile batch " << cfg_.tiles << "x" << cfg_.tile_height << "x" << cfg_.tile_width
            << ", adam lr " << cfg_.lr << " and the 5% image holdout are project defaults\n";
    }
    while (iteration_ < total) {
      LossRecord r;
      try {
        r = step(obs);
      } catch (const ad::NumericError& e) {
        throw TrainingAborted(std::string("training aborted at iteration ") + std::to_string(iteration_) + ": " +
                                  e.what() +
                                  (last_checkpoint_.empty() ? "" : "; last good checkpoint: " + last_checkpoint_),
                              iteration_, last_checkpoint_);
      }
      if (log_ && (r.iteration % cfg_.log_period == 0 || r.iteration == 1)) {
        *log_ << "iter " << r.iteration << " loss " << r.total << " l1 " << r.l1 << " gradient " << r.gradient << "\n";
      }
      if (r.iteration % cfg_.checkpoint_period == 0 || r.iteration == total) {
        const double mse = validation_mse();
        validations_.push_back({r.iteration, mse});
        if (log_) *log_ << "iter " << r.iteration << " validation_mse_x1e3 " << mse * 1e3 << "\n";
        write_outputs();
      }
    }
  }

  /// Mean squared error over held-out images.
  double validation_mse() const {
    const auto& ds = *ds_;
    const std::size_t per_level = std::max<std::size_t>(1, cfg_.validation_samples / ds.levels.size());
    double se = 0;
    std::size_t count = 0;
    for (std::uint32_t l = 0; l < ds.levels.size(); ++l) {
      const auto& lv = ds.levels[l];
      std::vector<std::uint64_t> images;
      for (std::uint64_t i = 0; i < lv.image_count() && images.size() * lv.image_size() < per_level; ++i) {
        if (is_holdout(l, i)) images.push_back(i);
      }
      const auto pred = predict_images(model_, lv, images);
      for (std::size_t k = 0; k < images.size(); ++k) {
        for (std::size_t p = 0; p < lv.image_size(); ++p) {
          const auto& ref = lv.radiance[images[k] * lv.image_size() + p];
          const auto& out = pred[k * lv.image_size() + p];
          for (int c = 0; c < 3; ++c) se += (static_cast<double>(out[c]) - ref[c]) * (static_cast<double>(out[c]) - ref[c]);
          count += 3;
        }
      }
    }
    return count ? se / static_cast<double>(count) : 0.0;
  }

  Checkpoint checkpoint() const {
    Checkpoint c = Checkpoint::from_material(model_);
    c.iteration = iteration_;
    c.config_hash = config_hash_;
    c.rng_state = serialize_rng(rng_);
    c.optimizer = adam_;
    return c;
  }

  std::string checkpoint_path() const {
    return cfg_.output_dir.empty() ? "" : (std::filesystem::path(cfg_.output_dir) / "checkpoint.nmat").string();
  }

 private:
  static std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
  }

  void check_dataset() const {
    ds_->validate();
    if (ds_->levels.size() > model_.config().num_levels()) {
      throw ConfigError("dataset has " + std::to_string(ds_->levels.size()) + " levels, model pyramid has " +
                        std::to_string(model_.config().num_levels()));
    }
  }

  void write_outputs() {
    if (cfg_.output_dir.empty()) return;
    std::filesystem::create_directories(cfg_.output_dir);
    save_checkpoint(checkpoint(), checkpoint_path());
    last_checkpoint_ = checkpoint_path();
    std::ofstream csv(std::filesystem::path(cfg_.output_dir) / "train_log.csv");
    csv << "iteration,total,l1,gradient\n";
    csv.precision(9);
    for (const auto& r : history_) csv << r.iteration << "," << r.total << "," << r.l1 << "," << r.gradient << "\n";
    std::ofstream val(std::filesystem::path(cfg_.output_dir) / "validation.csv");
    val << "iteration,mse\n";
    val.precision(9);
    for (const auto& v : validations_) val << v.iteration << "," << v.mse << "\n";
  }

  TrainConfig cfg_;
  const Dataset* ds_;
  BatchSampler sampler_;
  NeuralMaterial model_;
  TrainRng rng_;
  ad::AdamState adam_;
  std::uint64_t config_hash_;
  std::uint64_t iteration_ = 0;
  std::vector<LossRecord> history_;
  std::vector<ValidationRecord> validations_;
  std::string last_checkpoint_;
  std::ostream* log_ = nullptr;
};

/// Trains from scratch and returns the final checkpoint.
inline Checkpoint train(const TrainConfig& cfg, const Dataset& ds, const TrainObserver* obs = nullptr,
                        std::ostream* log = nullptr) {
  Trainer t(cfg, ds);
  t.set_log(log);
  t.run(obs);
  return t.checkpoint();
}

/// Continues a checkpoint to the configured budget.
inline Checkpoint resume(const Checkpoint& ckpt, const TrainConfig& cfg, const Dataset& ds,
                         const TrainObserver* obs = nullptr, std::ostream* log = nullptr) {
  Trainer t(cfg, ds, ckpt);
  t.set_log(log);
  t.run(obs);
  return t.checkpoint();
}

}  // namespace neumat
