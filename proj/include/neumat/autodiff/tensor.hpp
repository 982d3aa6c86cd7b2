// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace neumat::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Operand shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared in a forward value or a gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
class Tape;

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const Tape<T>* tape = nullptr;  // set for op outputs, null for leaves

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major array with an optional gradient. Handles share storage;
/// values are never modified after creation.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<T> values) {
    return Tensor(std::move(shape), std::move(values), false);
  }
  static Tensor parameter(Shape shape, std::vector<T> values) {
    return Tensor(std::move(shape), std::move(values), true);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> v(neumat::ad::numel(shape), T(0));
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }
  static Tensor scalar(T v) { return constant({}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> data() const { return node_->value; }
  const T* ptr() const { return node_->value.data(); }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  /// Gradient accumulated by the last backward pass; empty if none reached it.
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  TensorNode<T>& node() const { return *node_; }
  const std::shared_ptr<TensorNode<T>>& handle() const { return node_; }
  bool same(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape<T>;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad)
      : node_(std::make_shared<TensorNode<T>>()) {
    if (neumat::ad::numel(shape) != values.size()) {
      throw ShapeError("tensor shape " + to_string(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad.assign(node_->value.size(), T(0));
  }
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

  std::shared_ptr<TensorNode<T>> node_;
};

template <typename T>
bool all_finite(std::span<const T> v) {
  for (T x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Records executed operations for one forward pass so gradients can be
/// propagated in reverse. A tape is single-use and single-threaded.
template <typename T>
class Tape {
 public:
  /// Backward callback: receives the output gradient; adds into input grads.
  using Backward = std::function<void(std::span<const T> grad_out)>;

  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Wraps an op result. When any input requires a gradient the output does
  /// too and `backward` is recorded; otherwise nothing is kept.
  Tensor<T> emit(std::string_view op, Shape shape, std::vector<T> value,
                 std::initializer_list<Tensor<T>> inputs, Backward backward) {
    return emit(op, std::move(shape), std::move(value), std::span(inputs.begin(), inputs.size()),
                std::move(backward));
  }

  Tensor<T> emit(std::string_view op, Shape shape, std::vector<T> value,
                 std::span<const Tensor<T>> inputs, Backward backward) {
    if (consumed_) throw std::logic_error("tape already consumed by backward()");
    if (check_finite_ && !all_finite<T>(value)) {
      throw NumericError("non-finite value produced by " + std::string(op));
    }
    Tensor<T> out(std::move(shape), std::move(value), false);
    bool needs_grad = false;
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    if (!needs_grad) return out;

    out.node_->requires_grad = true;
    out.node_->tape = this;
    for (const auto& in : inputs) {
      if (in.requires_grad() && in.node().tape == nullptr) leaves_.insert(in.handle());
    }
    entries_.push_back({op, out.node_, std::move(backward)});
    return out;
  }

  /// Propagates d(loss)/d(x) into every reachable tensor that requires grad.
  /// Leaf gradients accumulate on top of whatever they already hold.
  void backward(const Tensor<T>& loss) {
    if (consumed_) throw std::logic_error("backward() called twice on one tape");
    if (loss.numel() != 1) {
      throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (loss.node().tape != this) throw std::logic_error("loss was not produced on this tape");
    consumed_ = true;
    loss.node().grad_buffer()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      auto& out = *it->output;
      if (out.grad.empty()) continue;  // not on a path to the loss
      if (check_finite_ && !all_finite<T>(out.grad)) {
        throw NumericError("non-finite gradient flowing into " + std::string(it->op));
      }
      it->backward(out.grad);
      it->backward = nullptr;  // release saved state
    }
    if (check_finite_) {
      for (const auto& leaf : leaves_) {
        if (!all_finite<T>(leaf->grad)) throw NumericError("non-finite gradient at a leaf tensor");
      }
    }
  }

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  /// Ops recorded so far, in execution order.
  std::vector<std::string_view> ops() const {
    std::vector<std::string_view> out;
    for (const auto& e : entries_) out.push_back(e.op);
    return out;
  }

 private:
  struct Entry {
    std::string_view op;
    std::shared_ptr<TensorNode<T>> output;
    Backward backward;
  };
  std::vector<Entry> entries_;
  std::unordered_set<std::shared_ptr<TensorNode<T>>> leaves_;
  bool check_finite_;
  bool consumed_ = false;
};

/// Mutable gradient buffer of an op input, allocated on first use.
template <typename T>
std::vector<T>& grad_of(const Tensor<T>& t) {
  return t.node().grad_buffer();
}

}  // namespace neumat::ad
