// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "neumat/loss/loss.hpp"
#include "neumat/model/material.hpp"
#include "support/gradcheck.hpp"

// The training objective as a function of the material parameters, for
// gradient checks of the whole pipeline.
namespace neumat::testing {

/// combined_loss(evaluate(queries), ref) with ref laid out [tiles x 3 x h x w].
template <typename T>
ad::Tensor<T> pipeline_loss(const NeuralMaterial& m, ad::Tape<T>& tape, const std::vector<ad::Tensor<T>>& leaves,
                            std::span<const Query7D> queries, TileLayout layout, const std::vector<double>& ref,
                            const LossConfig& cfg) {
  const std::size_t hw = layout.height * layout.width;
  const auto rgb = m.forward(tape, leaves, queries, layout);
  const auto pred = ad::reshape(tape, ad::transpose_last2(tape, ad::reshape(tape, rgb, {layout.tiles, hw, 3})),
                                {layout.tiles, 3, layout.height, layout.width});
  const auto target = ad::Tensor<T>::constant(pred.shape(), std::vector<T>(ref.begin(), ref.end()));
  return combined_loss(tape, pred, target, cfg).total;
}

/// Pipeline gradients from the fp32 tape (the production path) or the fp64
/// tape against fp64 central differences.
inline GradcheckResult pipeline_gradcheck(const NeuralMaterial& m, std::span<const Query7D> queries, TileLayout layout,
                                          const std::vector<double>& ref, const LossConfig& cfg, bool fp32,
                                          std::size_t coords, std::uint64_t seed) {
  const auto& params = m.parameters();
  std::vector<ad::Shape> shapes;
  std::vector<std::vector<double>> values;
  for (const auto& p : params) {
    shapes.push_back(p.shape);
    values.emplace_back(p.value.begin(), p.value.end());
  }
  const ScalarFn f = [&](ad::Tape<double>& tape, const std::vector<ad::Tensor<double>>& in) {
    return pipeline_loss(m, tape, in, queries, layout, ref, cfg);
  };
  std::vector<std::vector<double>> analytic;
  auto collect = [&](const auto& leaves) {
    for (const auto& l : leaves) {
      const auto g = l.grad();
      analytic.emplace_back(l.numel(), 0.0);
      std::copy(g.begin(), g.end(), analytic.back().begin());
    }
  };
  if (fp32) {
    ad::Tape<float> tape;
    const auto leaves = params.bind<float>(true);
    tape.backward(pipeline_loss(m, tape, leaves, queries, layout, ref, cfg));
    collect(leaves);
  } else {
    ad::Tape<double> tape;
    const auto leaves = params.bind<double>(true);
    tape.backward(pipeline_loss(m, tape, leaves, queries, layout, ref, cfg));
    collect(leaves);
  }
  return compare_gradients(f, shapes, std::move(values), analytic, coords, seed, true);
}

}  // namespace neumat::testing
