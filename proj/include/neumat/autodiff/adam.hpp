// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "neumat/autodiff/parameter.hpp"

namespace neumat::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment buffers, one per parameter, plus the step count.
struct AdamState {
  std::vector<std::vector<float>> m, v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParameterSet& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.size(), 0.0f);
      s.v.emplace_back(p.size(), 0.0f);
    }
    return s;
  }
};

/// One bias-corrected Adam update at step t = state.step + 1; zeroes grads.
inline void adam_step(ParameterSet& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size()) state = AdamState::zeros_like(params);
  const std::uint64_t t = ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j];
      const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      p.value[j] = static_cast<float>(p.value[j] - cfg.lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.eps));
    }
  }
  params.zero_grad();
}

}  // namespace neumat::ad
