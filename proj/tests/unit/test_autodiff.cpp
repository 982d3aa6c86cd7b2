// Copyright 2026 The neumat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "neumat/autodiff/adam.hpp"
#include "neumat/autodiff/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace ad = neumat::ad;
using neumat::testing::contract;
using neumat::testing::gradcheck;
using neumat::testing::random_values;
using D = ad::Tensor<double>;
using F = ad::Tensor<float>;
using Tape = ad::Tape<double>;
using Inputs = std::vector<D>;

namespace {

std::vector<double> values_of(const D& t) { return {t.data().begin(), t.data().end()}; }

// Values at least `gap` away from every multiple of `step`, to keep finite
// differences off kinks.
std::vector<double> away_from_kinks(std::size_t n, std::uint64_t seed, double step = 1.0, double gap = 0.05) {
  auto v = random_values(n, seed, -2.0, 2.0);
  for (auto& x : v) {
    const double r = x - step * std::round(x / step);
    if (std::abs(r) < gap) x += r >= 0 ? gap : -gap;
  }
  return v;
}

void expect_grad_ok(const neumat::testing::GradcheckResult& r, std::size_t min_checked = 50) {
  EXPECT_GE(r.checked, min_checked) << "skipped " << r.skipped;
  EXPECT_LT(r.max_rel, neumat::testing::kGradTolerance) << r.worst;
}

}  // namespace

// --- examples --------------------------------------------------------------

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  ad::Tape<float> tape;
  const auto eye = F::constant({2, 2}, {1, 0, 0, 1});
  const auto b = F::constant({2, 2}, {1, 2, 3, 4});
  const auto c = ad::matmul(tape, eye, b);
  EXPECT_EQ(c.shape(), (ad::Shape{2, 2}));
  EXPECT_EQ(std::vector<float>(c.data().begin(), c.data().end()), (std::vector<float>{1, 2, 3, 4}));
}

TEST(Matmul, RowTimesColumn) {
  ad::Tape<float> tape;
  const auto c = ad::matmul(tape, F::constant({1, 2}, {1, 2}), F::constant({2, 1}, {3, 4}));
  EXPECT_EQ(c.item(), 11.0f);
}

TEST(Matmul, RejectsInnerMismatch) {
  ad::Tape<float> tape;
  try {
    ad::matmul(tape, F::zeros({3, 4}), F::zeros({3, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ad::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[3x4]"), std::string::npos) << e.what();
  }
}

TEST(Conv2d, ConstantImageGivesZeroInteriorSobel) {
  ad::Tape<float> tape;
  const auto img = F::constant({1, 6, 6}, std::vector<float>(36, 2.5f));
  const auto k = F::constant({1, 1, 3, 3}, {1, 0, -1, 2, 0, -2, 1, 0, -1});
  const auto g = ad::conv2d(tape, img, k, 1);
  for (std::size_t y = 1; y < 5; ++y)
    for (std::size_t x = 1; x < 5; ++x) EXPECT_EQ(g[y * 6 + x], 0.0f);
}

TEST(Conv2d, RampGivesMinusEightInterior) {
  std::vector<double> ramp(8 * 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) ramp[y * 8 + x] = static_cast<double>(x);
  Tape tape;
  const std::vector<double> kx(neumat::oracle::kSobelX.begin(), neumat::oracle::kSobelX.end());
  const auto g = ad::conv2d(tape, D::constant({1, 8, 8}, ramp), D::constant({1, 1, 3, 3}, kx), 1);
  const auto oracle = neumat::oracle::sobel(ramp, 8, 8, neumat::oracle::kSobelX);
  for (std::size_t y = 1; y < 7; ++y) {
    for (std::size_t x = 1; x < 7; ++x) {
      EXPECT_EQ(g[y * 8 + x], -8.0);
      EXPECT_EQ(oracle[y * 8 + x], -8.0);
    }
  }
}

TEST(Conv2d, MatchesBruteForceOnRandomInput) {
  const auto in = random_values(64, 3), k = random_values(18, 4);
  ad::Tape<float> tape;
  const auto out = ad::conv2d(tape, F::constant({1, 8, 8}, std::vector<float>(in.begin(), in.end())),
                              F::constant({2, 1, 3, 3}, std::vector<float>(k.begin(), k.end())), 1);
  std::vector<double> inf(in.begin(), in.end()), kf(k.begin(), k.end());
  for (auto& v : inf) v = static_cast<float>(v);
  for (auto& v : kf) v = static_cast<float>(v);
  const auto ref = neumat::oracle::conv2d(inf, 1, 8, 8, kf, 2, 3, 3, 1);
  ASSERT_EQ(out.numel(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-6);
}

TEST(Conv2d, BatchedMatchesPerImage) {
  const auto in = random_values(2 * 3 * 5 * 6, 5), k = random_values(4 * 3 * 3 * 3, 6);
  Tape tape;
  const auto out = ad::conv2d(tape, D::constant({2, 3, 5, 6}, in), D::constant({4, 3, 3, 3}, k), 1);
  for (std::size_t b = 0; b < 2; ++b) {
    const std::vector<double> img(in.begin() + b * 90, in.begin() + (b + 1) * 90);
    const auto ref = neumat::oracle::conv2d(img, 3, 5, 6, k, 4, 3, 3, 1);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[b * ref.size() + i], ref[i], 1e-12);
  }
}

TEST(Conv2d, RejectsKernelLargerThanPaddedInput) {
  ad::Tape<float> tape;
  EXPECT_THROW(ad::conv2d(tape, F::zeros({1, 2, 2}), F::zeros({1, 1, 5, 5}), 1), ad::ShapeError);
  EXPECT_THROW(ad::conv2d(tape, F::zeros({1, 4, 4}), F::zeros({1, 1, 2, 2}), 0), ad::ShapeError);
  EXPECT_THROW(ad::conv2d(tape, F::zeros({2, 4, 4}), F::zeros({1, 1, 3, 3}), 1), ad::ShapeError);
}

TEST(Conv2d, SamePaddingPreservesExtent) {
  ad::Tape<float> tape;
  for (std::size_t k : {1u, 3u, 5u}) {
    const auto out = ad::conv2d(tape, F::zeros({2, 7, 9}), F::zeros({3, 2, k, k}), (k - 1) / 2);
    EXPECT_EQ(out.shape(), (ad::Shape{3, 7, 9}));
  }
}

TEST(Maxpool2d, ConstantImageUnchanged) {
  ad::Tape<float> tape;
  const auto out = ad::maxpool2d(tape, F::constant({2, 5, 4}, std::vector<float>(40, 1.5f)));
  EXPECT_EQ(out.shape(), (ad::Shape{2, 5, 4}));
  for (float v : out.data()) EXPECT_EQ(v, 1.5f);
}

TEST(Maxpool2d, SpikeSpreadsToThreeByThreeBlock) {
  std::vector<float> img(7 * 7, 0.0f);
  img[3 * 7 + 3] = 1.0f;
  ad::Tape<float> tape;
  const auto out = ad::maxpool2d(tape, F::constant({1, 7, 7}, img));
  for (std::size_t y = 0; y < 7; ++y)
    for (std::size_t x = 0; x < 7; ++x) {
      const bool inside = y >= 2 && y <= 4 && x >= 2 && x <= 4;
      EXPECT_EQ(out[y * 7 + x], inside ? 1.0f : 0.0f) << y << "," << x;
    }
}

TEST(Maxpool2d, GradientIsOneHotAtWindowMaxima) {
  // Distinct values, so every window has a unique maximum.
  auto v = random_values(36, 9);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += 10.0 * static_cast<double>(i % 7);
  Tape tape;
  const auto x = D::parameter({1, 6, 6}, v);
  tape.backward(ad::sum(tape, ad::maxpool2d(tape, x)));
  std::vector<double> expected(36, 0.0);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t xx = 0; xx < 6; ++xx) {
      std::size_t best = 0;
      double bv = -1e300;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const long sy = static_cast<long>(y) + dy, sx = static_cast<long>(xx) + dx;
          if (sy < 0 || sx < 0 || sy >= 6 || sx >= 6) continue;
          if (v[sy * 6 + sx] > bv) bv = v[sy * 6 + sx], best = sy * 6 + sx;
        }
      expected[best] += 1.0;
    }
  for (std::size_t i = 0; i < 36; ++i) EXPECT_EQ(x.grad()[i], expected[i]);
  const auto r = gradcheck([](Tape& t, const Inputs& in) { return ad::sum(t, ad::maxpool2d(t, in[0])); }, {{1, 6, 6}},
                           {v}, 36);
  EXPECT_EQ(r.checked + r.skipped, 36u);
  EXPECT_LT(r.max_rel, 1e-3) << r.worst;
}

TEST(Maxpool2d, TiesRouteToFirstIndex) {
  Tape tape;
  const auto x = D::parameter({1, 1, 3}, {2.0, 2.0, 2.0});
  tape.backward(ad::sum(tape, ad::maxpool2d(tape, x)));
  // Windows: {0,1}, {0,1,2}, {1,2} -> first maxima 0, 0, 1.
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  EXPECT_EQ(x.grad()[2], 0.0);
}

TEST(Elementwise, Examples) {
  ad::Tape<float> tape;
  const auto r = ad::relu(tape, F::constant({3}, {-1, 0, 2}));
  EXPECT_EQ(std::vector<float>(r.data().begin(), r.data().end()), (std::vector<float>{0, 0, 2}));
  EXPECT_EQ(ad::sin(tape, F::scalar(0)).item(), 0.0f);
  EXPECT_EQ(ad::cos(tape, F::scalar(0)).item(), 1.0f);
  EXPECT_FLOAT_EQ(ad::pow(tape, F::scalar(0.0625f), 0.25).item(), 0.5f);
  EXPECT_EQ(ad::abs(tape, F::scalar(-3)).item(), 3.0f);
  EXPECT_EQ(ad::square(tape, F::scalar(-3)).item(), 9.0f);
  EXPECT_EQ(ad::sub(tape, F::scalar(5), F::scalar(3)).item(), 2.0f);
  EXPECT_EQ(ad::mul(tape, F::scalar(5), F::scalar(3)).item(), 15.0f);
  EXPECT_EQ(ad::add(tape, F::scalar(5), F::scalar(3)).item(), 8.0f);
}

TEST(Elementwise, FractionalPowerOfNegativeIsRejected) {
  ad::Tape<float> tape;
  EXPECT_THROW(ad::pow(tape, F::constant({2}, {0.5f, -0.1f}), 0.25), std::exception);
}

TEST(Elementwise, BinaryShapeMismatchRejected) {
  ad::Tape<float> tape;
  EXPECT_THROW(ad::add(tape, F::zeros({2}), F::zeros({3})), ad::ShapeError);
  EXPECT_THROW(ad::mul(tape, F::zeros({2, 1}), F::zeros({1, 2})), ad::ShapeError);
}

TEST(Elementwise, ReluDerivativeAtZeroIsZero) {
  Tape tape;
  const auto x = D::parameter({3}, {-1.0, 0.0, 1.0});
  tape.backward(ad::sum(tape, ad::relu(tape, x)));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Elementwise, QuarterPowerGradientAtZeroIsZero) {
  Tape tape;
  const auto x = D::parameter({2}, {0.0, 1.0});
  tape.backward(ad::sum(tape, ad::pow(tape, x, 0.25)));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.25);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  const auto w = D::parameter({2, 3}, random_values(6, 1));
  tape.backward(ad::sum(tape, w));
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfSquares) {
  Tape tape;
  const auto w = D::parameter({3}, {1, 2, 3});
  tape.backward(ad::sum(tape, ad::square(tape, w)));
  EXPECT_EQ(w.grad()[0], 2.0);
  EXPECT_EQ(w.grad()[1], 4.0);
  EXPECT_EQ(w.grad()[2], 6.0);
}

TEST(Backward, RejectsNonScalar) {
  Tape tape;
  const auto w = D::parameter({3}, {1, 2, 3});
  EXPECT_THROW(tape.backward(ad::square(tape, w)), ad::ShapeError);
}

TEST(Backward, FanOutAccumulatesPerUseGradients) {
  const auto v = random_values(5, 2);
  Tape t1;
  const auto a = D::parameter({5}, v);
  // f = sum(sin(a) * a) uses `a` twice.
  t1.backward(ad::sum(t1, ad::mul(t1, ad::sin(t1, a), a)));
  Tape t2;
  const auto b1 = D::parameter({5}, v);
  const auto b2 = D::parameter({5}, v);
  t2.backward(ad::sum(t2, ad::mul(t2, ad::sin(t2, b1), b2)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a.grad()[i], b1.grad()[i] + b2.grad()[i], 1e-15);
}

TEST(Backward, NonFiniteForwardIsAnError) {
  ad::Tape<float> tape;
  const auto x = F::parameter({2}, {1e30f, 1.0f});
  EXPECT_THROW(ad::square(tape, ad::square(tape, x)), ad::NumericError);
}

TEST(Backward, OpsDoNotMutateInputs) {
  const auto v = random_values(2 * 3 * 4 * 4, 8);
  const auto k = random_values(3 * 3 * 3 * 3, 9);
  Tape tape;
  const auto x = D::parameter({2, 3, 4, 4}, v);
  const auto w = D::parameter({3, 3, 3, 3}, k);
  auto y = ad::conv2d(tape, x, w, 1);
  y = ad::maxpool2d(tape, ad::relu(tape, y));
  y = ad::concat(tape, {y, x}, 1);
  auto flat = ad::reshape(tape, y, {2 * 6 * 4, 4});
  auto enc = ad::fourier_encode(tape, flat, 3);
  tape.backward(ad::mean(tape, ad::square(tape, enc)));
  EXPECT_EQ(values_of(x), v);
  EXPECT_EQ(values_of(w), k);
}

TEST(Tape, RecordsOnlyDifferentiablePaths) {
  Tape tape;
  const auto c = D::constant({2}, {1, 2});
  ad::square(tape, c);
  EXPECT_EQ(tape.size(), 0u);
  const auto p = D::parameter({2}, {1, 2});
  ad::square(tape, ad::add(tape, p, c));
  EXPECT_EQ(tape.size(), 2u);
  EXPECT_EQ(tape.ops()[0], "add");
  EXPECT_EQ(tape.ops()[1], "square");
}

TEST(Tape, SingleUse) {
  Tape tape;
  const auto p = D::parameter({2}, {1, 2});
  const auto l = ad::sum(tape, p);
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), std::logic_error);
}

// --- finite-difference checks for every differentiable op ------------------

TEST(Gradcheck, Matmul) {
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::matmul(t, in[0], in[1]); }),
                           {{6, 5}, {5, 4}}, {random_values(30, 1), random_values(20, 2)}));
}

TEST(Gradcheck, Conv2dInputAndKernel) {
  for (std::size_t pad : {0u, 1u, 2u}) {
    expect_grad_ok(gradcheck(contract([pad](Tape& t, const Inputs& in) { return ad::conv2d(t, in[0], in[1], pad); }),
                             {{2, 2, 5, 6}, {3, 2, 3, 3}}, {random_values(120, 3), random_values(54, 4)}, 80));
  }
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::conv2d(t, in[0], in[1], 2); }),
                           {{2, 4, 4}, {2, 2, 5, 5}}, {random_values(32, 5), random_values(100, 6)}, 80));
}

TEST(Gradcheck, Maxpool2d) {
  auto v = random_values(3 * 6 * 6, 11);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.37 * static_cast<double>(i);
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::maxpool2d(t, in[0]); }), {{3, 6, 6}},
                           {v}, 80));
}

TEST(Gradcheck, Elementwise) {
  const ad::Shape s{8, 8};
  const auto a = random_values(64, 21), b = random_values(64, 22);
  auto pos = random_values(64, 23, 0.2, 2.0);
  auto kinked = away_from_kinks(64, 24, 1e9);  // away from 0
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::add(t, in[0], in[1]); }), {s, s}, {a, b}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::sub(t, in[0], in[1]); }), {s, s}, {a, b}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::mul(t, in[0], in[1]); }), {s, s}, {a, b}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::scale(t, in[0], -2.5); }), {s}, {a}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::add_scalar(t, in[0], 0.7); }), {s}, {a}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::relu(t, in[0]); }), {s}, {kinked}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::sin(t, in[0]); }), {s}, {a}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::cos(t, in[0]); }), {s}, {a}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::pow(t, in[0], 0.25); }), {s}, {pos}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::pow(t, in[0], 3.0); }), {s}, {a}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::abs(t, in[0]); }), {s}, {kinked}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::square(t, in[0]); }), {s}, {a}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::clamp_min(t, in[0], 0.0); }), {s},
                           {kinked}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::fract(t, in[0]); }), {s},
                           {away_from_kinks(64, 25)}));
}

TEST(Gradcheck, Reductions) {
  const auto a = random_values(60, 31);
  expect_grad_ok(gradcheck([](Tape& t, const Inputs& in) { return ad::sum(t, ad::square(t, in[0])); }, {{6, 10}}, {a}));
  expect_grad_ok(gradcheck([](Tape& t, const Inputs& in) { return ad::mean(t, ad::sin(t, in[0])); }, {{6, 10}}, {a}));
}

TEST(Gradcheck, ShapeOps) {
  const auto a = random_values(60, 41), b = random_values(36, 42);
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::reshape(t, in[0], {10, 6}); }), {{6, 10}},
                           {a}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::transpose_last2(t, in[0]); }), {{6, 10}},
                           {a}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::transpose_last2(t, in[0]); }),
                           {{3, 4, 5}}, {a}));
  expect_grad_ok(gradcheck(contract([](Tape& t, const Inputs& in) { return ad::concat(t, {in[0], in[1]}, 1); }),
                           {{6, 10}, {6, 6}}, {a, b}, 96));
  expect_grad_ok(gradcheck(
      contract([](Tape& t, const Inputs& in) { return ad::add_bias(t, in[0], in[1], 1); }), {{6, 10}, {10}},
      {a, random_values(10, 43)}, 70));
}

TEST(Gradcheck, FourierEncode) {
  for (std::size_t octaves : {1u, 4u, 10u}) {
    expect_grad_ok(gradcheck(contract([octaves](Tape& t, const Inputs& in) { return ad::fourier_encode(t, in[0], octaves); }),
                             {{30, 2}}, {random_values(60, 51)}));
  }
}

// --- fourier_encode values --------------------------------------------------

TEST(FourierEncode, Examples) {
  ad::Tape<float> tape;
  const auto z = ad::fourier_encode(tape, F::constant({1, 1}, {0.0f}), 2);
  EXPECT_EQ(std::vector<float>(z.data().begin(), z.data().end()), (std::vector<float>{0, 1, 0, 1}));
  const auto h = ad::fourier_encode(tape, F::constant({1, 1}, {0.5f}), 1);
  EXPECT_FLOAT_EQ(h[0], 1.0f);
  EXPECT_NEAR(h[1], 0.0f, 1e-7);
  EXPECT_EQ(ad::fourier_encode(tape, F::zeros({3, 2}), 10).shape(), (ad::Shape{3, 40}));
  EXPECT_EQ(ad::fourier_encode(tape, F::zeros({3, 2}), 4).shape(), (ad::Shape{3, 16}));
}

TEST(FourierEncode, MatchesDirectSinCos) {
  const auto p = random_values(200, 61);
  Tape tape;
  const auto e = ad::fourier_encode(tape, D::constant({100, 2}, p), 10);
  for (std::size_t i = 0; i < 200; ++i) {
    for (std::size_t k = 0; k < 10; ++k) {
      const double f = std::ldexp(std::numbers::pi, static_cast<int>(k));
      EXPECT_NEAR(e[i * 20 + 2 * k], std::sin(f * p[i]), 1e-12);
      EXPECT_NEAR(e[i * 20 + 2 * k + 1], std::cos(f * p[i]), 1e-12);
    }
  }
}

// --- adam -------------------------------------------------------------------

TEST(Adam, FirstStepMovesByLearningRate) {
  ad::ParameterSet ps;
  ps.add("w", {3});
  ps[0].value = {0.5f, -1.0f, 2.0f};
  ps[0].grad = {1.0f, 1.0f, -1.0f};
  ad::AdamState st;
  ad::adam_step(ps, st, {});
  EXPECT_NEAR(ps[0].value[0], 0.5 - 0.001, 1e-7);
  EXPECT_NEAR(ps[0].value[1], -1.0 - 0.001, 1e-7);
  EXPECT_NEAR(ps[0].value[2], 2.0 + 0.001, 1e-7);
  for (float g : ps[0].grad) EXPECT_EQ(g, 0.0f);
}

TEST(Adam, FirstStepRecurrenceInDouble) {
  // m1 = 0.1 g, v1 = 0.001 g^2, bias-corrected ratio = g/|g|.
  const double g = 1.0, lr = 1e-3, eps = 1e-8;
  const double m = 0.1 * g / (1 - 0.9), v = 0.001 * g * g / (1 - 0.999);
  EXPECT_NEAR(-lr * m / (std::sqrt(v) + eps), -0.001, 1e-9);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ad::ParameterSet ps;
  ps.add("w", {4});
  ps[0].value = {1, 2, 3, 4};
  ad::AdamState st;
  for (int i = 0; i < 3; ++i) ad::adam_step(ps, st, {});
  EXPECT_EQ(ps[0].value, (std::vector<float>{1, 2, 3, 4}));
  EXPECT_EQ(st.step, 3u);
}

TEST(Adam, DeterministicAcrossRuns) {
  auto run = [] {
    ad::ParameterSet ps;
    ps.add("w", {16});
    const auto init = random_values(16, 71);
    ps[0].value.assign(init.begin(), init.end());
    ad::AdamState st;
    for (int s = 0; s < 2; ++s) {
      for (std::size_t i = 0; i < 16; ++i) ps[0].grad[i] = std::sin(ps[0].value[i] * 3.0f + s);
      ad::adam_step(ps, st, {});
    }
    return ps[0].value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, MinimizesQuadratic) {
  ad::ParameterSet ps;
  ps.add("w", {2});
  ps[0].value = {3.0f, -2.0f};
  ad::AdamState st;
  for (int i = 0; i < 3000; ++i) {
    for (std::size_t j = 0; j < 2; ++j) ps[0].grad[j] = 2.0f * ps[0].value[j];
    ad::adam_step(ps, st, {0.01});
  }
  EXPECT_NEAR(ps[0].value[0], 0.0, 1e-2);
  EXPECT_NEAR(ps[0].value[1], 0.0, 1e-2);
}

// --- brute-force oracle equivalence on small shapes ------------------------

TEST(Oracle, Conv2dAllSmallShapes) {
  for (std::size_t h = 1; h <= 8; ++h) {
    for (std::size_t w = 1; w <= 8; ++w) {
      for (std::size_t k : {1u, 3u}) {
        const std::size_t pad = (k - 1) / 2;
        const auto in = random_values(2 * h * w, h * 31 + w), ker = random_values(2 * 2 * k * k, h * 7 + w);
        Tape tape;
        const auto out = ad::conv2d(tape, D::constant({2, h, w}, in), D::constant({2, 2, k, k}, ker), pad);
        const auto ref = neumat::oracle::conv2d(in, 2, h, w, ker, 2, k, k, pad);
        ASSERT_EQ(out.numel(), ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(out[i], ref[i], 1e-12) << h << "x" << w;
      }
    }
  }
}

TEST(Oracle, Maxpool2dAllSmallShapes) {
  for (std::size_t h = 1; h <= 8; ++h) {
    for (std::size_t w = 1; w <= 8; ++w) {
      const auto in = random_values(2 * h * w, h * 13 + w);
      Tape tape;
      const auto out = ad::maxpool2d(tape, D::constant({2, h, w}, in));
      const auto ref = neumat::oracle::maxpool2d(in, 2, h, w, 3, 1);
      for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_EQ(out[i], ref[i]);
    }
  }
}
