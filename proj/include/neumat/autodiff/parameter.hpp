// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "neumat/autodiff/tensor.hpp"

namespace neumat::ad {

/// A named learnable fp32 buffer with its accumulated gradient.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;

  Parameter(std::string n, Shape s) : name(std::move(n)), shape(std::move(s)) {
    value.assign(numel(shape), 0.0f);
    grad.assign(value.size(), 0.0f);
  }
  std::size_t size() const { return value.size(); }
};

/// Ordered parameter collection. Order is part of the checkpoint layout.
class ParameterSet {
 public:
  std::size_t add(std::string name, Shape shape) {
    if (find(name) != npos) throw std::logic_error("duplicate parameter " + name);
    params_.emplace_back(std::move(name), std::move(shape));
    return params_.size() - 1;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    return npos;
  }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }
  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
  }

  /// Creates one leaf tensor per parameter (converted to T) for a forward pass.
  template <typename T>
  std::vector<Tensor<T>> bind(bool requires_grad) const {
    std::vector<Tensor<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) {
      std::vector<T> v(p.value.begin(), p.value.end());
      out.push_back(requires_grad ? Tensor<T>::parameter(p.shape, std::move(v))
                                  : Tensor<T>::constant(p.shape, std::move(v)));
    }
    return out;
  }

  /// Adds leaf gradients from a finished backward pass into `grad`.
  template <typename T>
  void accumulate_grads(const std::vector<Tensor<T>>& leaves) {
    if (leaves.size() != params_.size()) throw std::logic_error("accumulate_grads: leaf count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto g = leaves[i].grad();
      if (g.empty()) continue;
      auto& dst = params_[i].grad;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<float>(dst[j] + g[j]);
    }
  }

 private:
  std::vector<Parameter> params_;
};

}  // namespace neumat::ad
