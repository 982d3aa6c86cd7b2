// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "neumat/autodiff/ops.hpp"

// Central finite differences against reverse-mode gradients, evaluated on
// the double-precision instantiation of the ops.
namespace neumat::testing {

inline constexpr double kGradTolerance = 1e-3;  // relative error bound
inline constexpr double kFdStep = 1e-6;
inline constexpr double kRelFloor = 1e-5;  // denominators below this count as absolute error

using ScalarFn = std::function<ad::Tensor<double>(ad::Tape<double>&, const std::vector<ad::Tensor<double>>&)>;

struct GradcheckResult {
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose stencil straddles a kink
  double max_rel = 0;
  std::string worst;
  bool ok() const { return max_rel < kGradTolerance; }
};

inline double eval_scalar(const ScalarFn& f, const std::vector<std::vector<double>>& values,
                          const std::vector<ad::Shape>& shapes) {
  ad::Tape<double> tape;
  std::vector<ad::Tensor<double>> in;
  for (std::size_t i = 0; i < values.size(); ++i) in.push_back(ad::Tensor<double>::constant(shapes[i], values[i]));
  return f(tape, in).item();
}

/// Compares `analytic` (one gradient vector per input) with central
/// differences of `f` evaluated in double precision. Checks up to
/// `max_coords` randomly chosen coordinates (all of them if there are fewer).
/// A coordinate is skipped, not passed, when the derivative estimates at
/// step h and h/2 disagree, i.e. the stencil crosses a non-differentiable
/// point. With `prefer_nonzero`, coordinates whose analytic gradient is
/// nonzero are visited first.
inline GradcheckResult compare_gradients(const ScalarFn& f, const std::vector<ad::Shape>& shapes,
                                         std::vector<std::vector<double>> values,
                                         const std::vector<std::vector<double>>& analytic, std::size_t max_coords,
                                         std::uint64_t seed, bool prefer_nonzero) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < values[i].size(); ++j) coords.emplace_back(i, j);
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (prefer_nonzero) {
    std::stable_partition(coords.begin(), coords.end(), [&](const auto& c) { return analytic[c.first][c.second] != 0.0; });
  }

  GradcheckResult r;
  for (const auto& [i, j] : coords) {
    if (r.checked >= max_coords) break;
    const double x = values[i][j];
    auto fd = [&](double h) {
      values[i][j] = x + h;
      const double fp = eval_scalar(f, values, shapes);
      values[i][j] = x - h;
      const double fm = eval_scalar(f, values, shapes);
      values[i][j] = x;
      return (fp - fm) / (2 * h);
    };
    const double n1 = fd(kFdStep), n2 = fd(0.5 * kFdStep);
    if (std::abs(n1 - n2) > 1e-4 * std::max({std::abs(n1), std::abs(n2), kRelFloor})) {
      ++r.skipped;
      continue;
    }
    const double a = analytic[i][j];
    const double rel = std::abs(a - n1) / std::max({std::abs(a), std::abs(n1), kRelFloor});
    ++r.checked;
    if (rel > r.max_rel) {
      r.max_rel = rel;
      std::ostringstream os;
      os << "input " << i << " index " << j << ": analytic " << a << " numeric " << n1;
      r.worst = os.str();
    }
  }
  return r;
}

/// Reverse-mode gradients of `f` on the double tape against central
/// differences.
inline GradcheckResult gradcheck(const ScalarFn& f, const std::vector<ad::Shape>& shapes,
                                 std::vector<std::vector<double>> values, std::size_t max_coords = 64,
                                 std::uint64_t seed = 1, bool prefer_nonzero = false) {
  ad::Tape<double> tape;
  std::vector<ad::Tensor<double>> leaves;
  for (std::size_t i = 0; i < values.size(); ++i) leaves.push_back(ad::Tensor<double>::parameter(shapes[i], values[i]));
  tape.backward(f(tape, leaves));
  std::vector<std::vector<double>> analytic;
  for (const auto& l : leaves) {
    const auto g = l.grad();
    analytic.emplace_back(g.empty() ? std::vector<double>(l.numel(), 0.0) : std::vector<double>(g.begin(), g.end()));
  }
  return compare_gradients(f, shapes, std::move(values), analytic, max_coords, seed, prefer_nonzero);
}

/// Wraps an op with a non-scalar output into sum(op(x) * w) for fixed random w.
inline ScalarFn contract(std::function<ad::Tensor<double>(ad::Tape<double>&, const std::vector<ad::Tensor<double>>&)> op,
                         std::uint64_t seed = 7) {
  return [op, seed](ad::Tape<double>& tape, const std::vector<ad::Tensor<double>>& in) {
    const auto y = op(tape, in);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> w(y.numel());
    for (auto& v : w) v = u(rng);
    return ad::sum(tape, ad::mul(tape, y, ad::Tensor<double>::constant(y.shape(), std::move(w))));
  };
}

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace neumat::testing
