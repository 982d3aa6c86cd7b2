// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "neumat/model/query.hpp"
#include "neumat/util/rng.hpp"

namespace neumat::testing {

/// Valid random queries: uv in [0,1)^2, directions inside the unit disk.
inline std::vector<Query7D> random_queries(std::size_t n, std::uint64_t seed, double max_lod) {
  StreamRng rng(seed);
  auto disk = [&] {
    const double r = 0.95 * std::sqrt(rng.uniform()), a = 6.283185307179586 * rng.uniform();
    return Vec2{static_cast<float>(r * std::cos(a)), static_cast<float>(r * std::sin(a))};
  };
  std::vector<Query7D> q(n);
  for (auto& x : q) {
    x.uv = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform())};
    x.wi = disk();
    x.wo = disk();
    x.lod = static_cast<float>(max_lod * rng.uniform());
  }
  return q;
}

/// Fresh scratch directory under the test working directory.
inline std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace neumat::testing
