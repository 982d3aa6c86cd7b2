// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "neumat/autodiff/kernels.hpp"
#include "neumat/autodiff/tensor.hpp"

// Differentiable operations. Each op computes its forward value eagerly and
// records a closure that adds the vector-Jacobian product into its inputs.
// Broadcasting is limited to tensor-scalar ops and the explicit add_bias.
namespace neumat::ad {

namespace detail {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T>
void add_into(std::vector<T>& dst, std::span<const T> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

/// Elementwise unary op; `deriv(x)` is dy/dx evaluated at the input.
template <typename T, typename F, typename D>
Tensor<T> unary(Tape<T>& tape, const char* op, const Tensor<T>& x, F f, D deriv) {
  std::vector<T> out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return tape.emit(op, x.shape(), std::move(out), {x}, [x, deriv](std::span<const T> g) {
    auto& gx = grad_of(x);
    const auto xv = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i]);
  });
}

/// (sin x, cos x) -> (sin 2x, cos 2x). Error grows 2x per step, which stays
/// far below fp32 resolution for the octave counts used here.
inline void double_angle(double& s, double& c) {
  const double s2 = 2.0 * s * c;
  c = (c - s) * (c + s);
  s = s2;
}

/// Image-shaped operand: rank 3 [C x H x W] or rank 4 [B x C x H x W].
struct ImageDims {
  std::size_t batch, channels, height, width;
};

template <typename T>
ImageDims image_dims(const char* op, const Tensor<T>& x) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  throw ShapeError(std::string(op) + ": expected [C x H x W] or [B x C x H x W], got " +
                   to_string(x.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a[m x k] * b[k x n].
template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()) +
                     " (inner extents must match)");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  kernels::gemm(m, n, k, a.ptr(), b.ptr(), out.data(), false);
  return tape.emit("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](std::span<const T> g) {
    if (a.requires_grad()) {
      const auto bt = kernels::transpose(b.ptr(), k, n);  // [n x k]
      kernels::gemm(m, k, n, g.data(), bt.data(), grad_of(a).data(), true);
    }
    if (b.requires_grad()) {
      const auto at = kernels::transpose(a.ptr(), m, k);  // [k x m]
      kernels::gemm(k, n, m, at.data(), g.data(), grad_of(b).data(), true);
    }
  });
}

/// Stride-1 cross-correlation with symmetric zero padding.
/// input [C_in x H x W] or [B x C_in x H x W]; kernel [C_out x C_in x kh x kw].
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernel, std::size_t padding) {
  const auto d = detail::image_dims("conv2d", input);
  if (kernel.rank() != 4 || kernel.dim(1) != d.channels) {
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " incompatible with input " +
                     to_string(input.shape()));
  }
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (kh > d.height + 2 * padding || kw > d.width + 2 * padding) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + std::to_string(d.height + 2 * padding) + "x" +
                     std::to_string(d.width + 2 * padding));
  }
  const kernels::ConvGeometry geo{d.channels, d.height, d.width, kh, kw, padding};
  const std::size_t oh = geo.out_h(), ow = geo.out_w(), pix = oh * ow, patch = geo.patch();
  const std::size_t in_stride = d.channels * d.height * d.width;
  const bool pointwise = kh == 1 && kw == 1 && padding == 0;

  std::vector<T> out(d.batch * cout * pix);
  std::vector<T> col(pointwise ? 0 : patch * pix);
  for (std::size_t b = 0; b < d.batch; ++b) {
    const T* src = input.ptr() + b * in_stride;
    if (!pointwise) kernels::im2col(geo, src, col.data());
    kernels::gemm(cout, pix, patch, kernel.ptr(), pointwise ? src : col.data(), out.data() + b * cout * pix,
                  false);
  }

  Shape shape = input.rank() == 3 ? Shape{cout, oh, ow} : Shape{d.batch, cout, oh, ow};
  return tape.emit("conv2d", std::move(shape), std::move(out), {input, kernel},
                   [input, kernel, geo, d, cout, pix, patch, in_stride, pointwise](std::span<const T> g) {
                     std::vector<T> col(pointwise ? 0 : patch * pix);
                     std::vector<T> colt;
                     const auto kt = input.requires_grad() ? kernels::transpose(kernel.ptr(), cout, patch)
                                                           : std::vector<T>{};
                     std::vector<T> dcol(input.requires_grad() ? patch * pix : 0);
                     std::vector<double> dimg(input.requires_grad() ? in_stride : 0);
                     for (std::size_t b = 0; b < d.batch; ++b) {
                       const T* src = input.ptr() + b * in_stride;
                       const T* gb = g.data() + b * cout * pix;
                       if (kernel.requires_grad()) {
                         if (!pointwise) kernels::im2col(geo, src, col.data());
                         colt = kernels::transpose(pointwise ? src : col.data(), patch, pix);
                         kernels::gemm(cout, patch, pix, gb, colt.data(), grad_of(kernel).data(), true);
                       }
                       if (input.requires_grad()) {
                         T* gi = grad_of(input).data() + b * in_stride;
                         if (pointwise) {
                           kernels::gemm(patch, pix, cout, kt.data(), gb, gi, true);
                         } else {
                           kernels::gemm(patch, pix, cout, kt.data(), gb, dcol.data(), false);
                           std::fill(dimg.begin(), dimg.end(), 0.0);
                           kernels::col2im_add(geo, dcol.data(), dimg.data());
                           for (std::size_t i = 0; i < in_stride; ++i) gi[i] = static_cast<T>(gi[i] + dimg[i]);
                         }
                       }
                     }
                   });
}

/// Per-channel sliding-window maximum, stride 1. Padding cells never win.
/// Ties resolve to the first element in row-major scan order.
template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& input, std::size_t window = 3, std::size_t padding = 1) {
  const auto d = detail::image_dims("maxpool2d", input);
  if (input.numel() == 0) throw ShapeError("maxpool2d: empty input");
  if (window % 2 == 0 || window > d.height + 2 * padding || window > d.width + 2 * padding) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " invalid for input " +
                     to_string(input.shape()));
  }
  const std::size_t oh = d.height + 2 * padding - window + 1, ow = d.width + 2 * padding - window + 1;
  const std::size_t planes = d.batch * d.channels;
  std::vector<T> out(planes * oh * ow);
  std::vector<std::uint32_t> argmax(out.size());
  const auto iv = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * d.height * d.width;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_i = 0;
        bool found = false;
        for (std::size_t ky = 0; ky < window; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.height)) continue;
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.width)) continue;
            const std::size_t i = base + static_cast<std::size_t>(iy) * d.width + static_cast<std::size_t>(ix);
            if (!found || iv[i] > best) {
              best = iv[i];
              best_i = i;
              found = true;
            }
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = static_cast<std::uint32_t>(best_i);
      }
    }
  }
  Shape shape = input.shape();
  shape[shape.size() - 2] = oh;
  shape[shape.size() - 1] = ow;
  return tape.emit("maxpool2d", std::move(shape), std::move(out), {input},
                   [input, argmax = std::move(argmax)](std::span<const T> g) {
                     auto& gi = grad_of(input);
                     for (std::size_t o = 0; o < g.size(); ++o) gi[argmax[o]] += g[o];
                   });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return tape.emit("add", a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
    if (a.requires_grad()) detail::add_into(grad_of(a), g);
    if (b.requires_grad()) detail::add_into(grad_of(b), g);
  });
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return tape.emit("sub", a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
    if (a.requires_grad()) detail::add_into(grad_of(a), g);
    if (b.requires_grad()) {
      auto& gb = grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return tape.emit("mul", a.shape(), std::move(out), {a, b}, [a, b](std::span<const T> g) {
    if (a.requires_grad()) {
      auto& ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto& gb = grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
    }
  });
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, double s) {
  return detail::unary(
      tape, "scale", x, [s](T v) { return static_cast<T>(v * s); }, [s](T) { return static_cast<T>(s); });
}

template <typename T>
Tensor<T> add_scalar(Tape<T>& tape, const Tensor<T>& x, double s) {
  return detail::unary(
      tape, "add_scalar", x, [s](T v) { return static_cast<T>(v + s); }, [](T) { return T(1); });
}

/// max(x, 0); the derivative at 0 is 0.
template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sin(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, "sin", x, [](T v) { return std::sin(v); }, [](T v) { return std::cos(v); });
}

template <typename T>
Tensor<T> cos(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, "cos", x, [](T v) { return std::cos(v); }, [](T v) { return -std::sin(v); });
}

/// x^p. Non-integer exponents require x >= 0; for p < 1 the derivative at
/// exactly 0 is defined as 0 (clamped subgradient).
template <typename T>
Tensor<T> pow(Tape<T>& tape, const Tensor<T>& x, double p) {
  const bool integral = std::floor(p) == p;
  if (!integral) {
    for (T v : x.data()) {
      if (v < T(0)) throw std::domain_error("pow: negative operand for exponent " + std::to_string(p));
    }
  }
  return detail::unary(
      tape, "pow", x, [p](T v) { return static_cast<T>(std::pow(static_cast<double>(v), p)); },
      [p](T v) {
        if (v == T(0) && p < 1.0) return T(0);
        return static_cast<T>(p * std::pow(static_cast<double>(v), p - 1.0));
      });
}

template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, "abs", x, [](T v) { return std::abs(v); },
      [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, "square", x, [](T v) { return v * v; }, [](T v) { return T(2) * v; });
}

/// max(x, lo); gradient passes only where x > lo.
template <typename T>
Tensor<T> clamp_min(Tape<T>& tape, const Tensor<T>& x, double lo) {
  const T l = static_cast<T>(lo);
  return detail::unary(
      tape, "clamp_min", x, [l](T v) { return v > l ? v : l; }, [l](T v) { return v > l ? T(1) : T(0); });
}

/// x - floor(x): wraps texture coordinates into [0, 1). Derivative 1.
template <typename T>
Tensor<T> fract(Tape<T>& tape, const Tensor<T>& x) {
  return detail::unary(
      tape, "fract", x,
      [](T v) {
        T f = v - std::floor(v);
        return f >= T(1) ? T(0) : f;  // guards v = -tiny rounding to 1
      },
      [](T) { return T(1); });
}

// ---------------------------------------------------------------------------
// Reductions and layout

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  return tape.emit("sum", {}, {static_cast<T>(acc)}, {x}, [x](std::span<const T> g) {
    auto& gx = grad_of(x);
    for (auto& v : gx) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return tape.emit("mean", {}, {static_cast<T>(acc * inv)}, {x}, [x, inv](std::span<const T> g) {
    auto& gx = grad_of(x);
    const T s = static_cast<T>(g[0] * inv);
    for (auto& v : gx) v += s;
  });
}

/// Same data, new shape with the same element count.
template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " to " + to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return tape.emit("reshape", std::move(shape), std::move(out), {x},
                   [x](std::span<const T> g) { detail::add_into(grad_of(x), g); });
}

/// [B x M x K] -> [B x K x M] (rank 3) or [M x K] -> [K x M] (rank 2).
template <typename T>
Tensor<T> transpose_last2(Tape<T>& tape, const Tensor<T>& x) {
  if (x.rank() != 2 && x.rank() != 3) throw ShapeError("transpose_last2: rank must be 2 or 3");
  const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t m = x.dim(x.rank() - 2), k = x.dim(x.rank() - 1);
  std::vector<T> out(x.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    auto t = kernels::transpose(x.ptr() + b * m * k, m, k);
    std::copy(t.begin(), t.end(), out.begin() + static_cast<std::ptrdiff_t>(b * m * k));
  }
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return tape.emit("transpose", std::move(shape), std::move(out), {x}, [x, batch, m, k](std::span<const T> g) {
    auto& gx = grad_of(x);
    for (std::size_t b = 0; b < batch; ++b) {
      auto t = kernels::transpose(g.data() + b * m * k, k, m);
      for (std::size_t i = 0; i < m * k; ++i) gx[b * m * k + i] += t[i];
    }
  });
}

/// Concatenates along `axis`; all other extents must agree.
template <typename T>
Tensor<T> concat(Tape<T>& tape, std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
  std::size_t outer = 1, inner = 1, total = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  for (const auto& p : parts) {
    bool ok = p.rank() == ref.size();
    for (std::size_t i = 0; ok && i < ref.size(); ++i) ok = i == axis || p.dim(i) == ref[i];
    if (!ok) throw ShapeError("concat: " + to_string(p.shape()) + " incompatible with " + to_string(ref));
    total += p.dim(axis);
  }
  std::vector<T> out(outer * total * inner);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t block = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.ptr() + o * block, block, out.data() + (o * total + off) * inner);
    }
    off += p.dim(axis);
  }
  Shape shape = ref;
  shape[axis] = total;
  std::vector<Tensor<T>> saved(parts.begin(), parts.end());
  return tape.emit("concat", std::move(shape), std::move(out), parts,
                   [saved, offsets, outer, inner, total, axis](std::span<const T> g) {
                     for (std::size_t i = 0; i < saved.size(); ++i) {
                       const auto& p = saved[i];
                       if (!p.requires_grad()) continue;
                       auto& gp = grad_of(p);
                       const std::size_t block = p.dim(axis) * inner;
                       for (std::size_t o = 0; o < outer; ++o) {
                         const T* src = g.data() + (o * total + offsets[i]) * inner;
                         for (std::size_t j = 0; j < block; ++j) gp[o * block + j] += src[j];
                       }
                     }
                   });
}

template <typename T>
Tensor<T> concat(Tape<T>& tape, std::initializer_list<Tensor<T>> parts, std::size_t axis) {
  return concat(tape, std::span<const Tensor<T>>(parts.begin(), parts.size()), axis);
}

/// Adds bias[shape[axis]] broadcast over every other axis of x.
template <typename T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias, std::size_t axis) {
  if (axis >= x.rank() || bias.numel() != x.dim(axis)) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match axis " +
                     std::to_string(axis) + " of " + to_string(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t base = (o * n + c) * inner;
      for (std::size_t j = 0; j < inner; ++j) out[base + j] = x[base + j] + bias[c];
    }
  }
  return tape.emit("add_bias", x.shape(), std::move(out), {x, bias}, [x, bias, outer, inner, n](std::span<const T> g) {
    if (x.requires_grad()) detail::add_into(grad_of(x), g);
    if (bias.requires_grad()) {
      std::vector<double> acc(n, 0.0);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t c = 0; c < n; ++c) {
          const std::size_t base = (o * n + c) * inner;
          for (std::size_t j = 0; j < inner; ++j) acc[c] += g[base + j];
        }
      }
      auto& gb = grad_of(bias);
      for (std::size_t c = 0; c < n; ++c) gb[c] = static_cast<T>(gb[c] + acc[c]);
    }
  });
}

/// Positional encoding of every column of x[N x d] with L octaves:
/// out[N x 2Ld], ordered per input column as
/// (sin 2^0 pi p, cos 2^0 pi p, ..., sin 2^{L-1} pi p, cos 2^{L-1} pi p).
template <typename T>
Tensor<T> fourier_encode(Tape<T>& tape, const Tensor<T>& x, std::size_t octaves) {
  if (x.rank() != 2) throw ShapeError("fourier_encode: expected [N x d], got " + to_string(x.shape()));
  if (octaves == 0) throw std::invalid_argument("fourier_encode: need at least one octave");
  const std::size_t n = x.dim(0), d = x.dim(1), width = 2 * octaves * d;
  std::vector<T> out(n * width);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double p = x[r * d + c];
      T* dst = out.data() + r * width + c * 2 * octaves;
      double s = std::sin(std::numbers::pi * p), co = std::cos(std::numbers::pi * p);
      for (std::size_t k = 0; k < octaves; ++k) {
        dst[2 * k] = static_cast<T>(s);
        dst[2 * k + 1] = static_cast<T>(co);
        detail::double_angle(s, co);
      }
    }
  }
  return tape.emit("fourier_encode", {n, width}, std::move(out), {x}, [x, n, d, octaves, width](std::span<const T> g) {
    auto& gx = grad_of(x);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double p = x[r * d + c];
        const T* gr = g.data() + r * width + c * 2 * octaves;
        double s = std::sin(std::numbers::pi * p), co = std::cos(std::numbers::pi * p);
        double freq = std::numbers::pi, acc = 0.0;
        for (std::size_t k = 0; k < octaves; ++k, freq *= 2.0) {
          acc += freq * (co * gr[2 * k] - s * gr[2 * k + 1]);
          detail::double_angle(s, co);
        }
        gx[r * d + c] = static_cast<T>(gx[r * d + c] + acc);
      }
    }
  });
}

}  // namespace neumat::ad
