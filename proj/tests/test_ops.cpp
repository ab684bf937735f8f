// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dcrsr/layers.hpp"
#include "dcrsr/ops.hpp"
#include "test_util.hpp"

namespace dcrsr {
namespace {

using testing::finite_difference_check;
using testing::random_tensor;

// Direct nested-loop convolution with zero padding.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                           int pad) {
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), k = w.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor<double> out({n, co, oh, ow});
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < co; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x0 = 0; x0 < ow; ++x0) {
          double acc = b[o];
          for (int c = 0; c < ci; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = y * stride - pad + ky, ix = x0 * stride - pad + kx;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wd) acc += w.at(o, c, ky, kx) * x.at(s, c, iy, ix);
              }
          out.at(s, o, y, x0) = acc;
        }
  return out;
}

// Scatter form of the transposed convolution: every input pixel stamps the
// kernel into the output at stride offsets.
Tensor<double> tconv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                            int pad) {
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(1), k = w.dim(2);
  const int oh = (h - 1) * stride - 2 * pad + k, ow = (wd - 1) * stride - 2 * pad + k;
  Tensor<double> out({n, co, oh, ow});
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < co; ++o)
      for (int y = 0; y < oh; ++y)
        for (int x0 = 0; x0 < ow; ++x0) out.at(s, o, y, x0) = b[o];
  for (int s = 0; s < n; ++s)
    for (int c = 0; c < ci; ++c)
      for (int y = 0; y < h; ++y)
        for (int x0 = 0; x0 < wd; ++x0)
          for (int o = 0; o < co; ++o)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int oy = y * stride - pad + ky, ox = x0 * stride - pad + kx;
                if (oy >= 0 && oy < oh && ox >= 0 && ox < ow) out.at(s, o, oy, ox) += w.at(c, o, ky, kx) * x.at(s, c, y, x0);
              }
  return out;
}

struct ConvCase {
  int ci, co, k, stride, pad, h, w;
};

TEST(Conv2d, MatchesDirectLoops) {
  const ConvCase cases[] = {{3, 5, 3, 1, 1, 7, 6}, {4, 2, 1, 1, 0, 5, 5}, {2, 3, 3, 2, 1, 9, 8}, {1, 1, 3, 1, 1, 1, 1}};
  int seed = 0;
  for (const auto& c : cases) {
    const auto x = random_tensor<double>({2, c.ci, c.h, c.w}, ++seed);
    const auto w = random_tensor<double>({c.co, c.ci, c.k, c.k}, ++seed);
    const auto b = random_tensor<double>({c.co}, ++seed);
    const auto got = ops::conv2d(constant(x), constant(w), constant(b), c.stride, c.pad).value();
    EXPECT_LT(max_abs_diff(got, conv_oracle(x, w, b, c.stride, c.pad)), 1e-12);
  }
}

TEST(ConvTranspose2d, MatchesScatterOracleAndDoubles) {
  const auto x = random_tensor<double>({2, 3, 5, 4}, 11);
  const auto w = random_tensor<double>({3, 2, 4, 4}, 12);
  const auto b = random_tensor<double>({2}, 13);
  const auto got = ops::conv_transpose2d(constant(x), constant(w), constant(b), 2, 1).value();
  EXPECT_EQ(got.shape(), (Shape{2, 2, 10, 8}));
  EXPECT_LT(max_abs_diff(got, tconv_oracle(x, w, b, 2, 1)), 1e-12);
}

TEST(Conv2d, RejectsChannelMismatch) {
  const auto x = random_tensor<double>({1, 3, 4, 4}, 1);
  const auto w = random_tensor<double>({2, 4, 3, 3}, 2);
  const auto b = random_tensor<double>({2}, 3);
  EXPECT_THROW(ops::conv2d(constant(x), constant(w), constant(b), 1, 1), ShapeError);
}

// sum(v * probe) with its own backward, so every output element gets a
// distinct upstream gradient.
Var<double> probe_dot(const Var<double>& v, const Tensor<double>& probe) {
  double s = 0;
  for (std::size_t i = 0; i < probe.size(); ++i) s += v.value()[i] * probe[i];
  return make_result<double>(Tensor<double>({1}, s), {v}, [v, probe](Node<double>& self) {
    auto& g = v.node().grad_buffer();
    for (std::size_t i = 0; i < probe.size(); ++i) g[i] += self.grad[0] * probe[i];
  });
}

template <class Build>
testing::GradCheckResult op_grad_check(std::vector<Parameter<double>*> params, Build build, std::uint64_t seed) {
  Tensor<double> probe;
  auto loss = [&]() -> Var<double> {
    Var<double> out = build();
    if (probe.empty()) probe = random_tensor<double>(out.shape(), seed + 99);
    return probe_dot(out, probe);
  };
  return finite_difference_check(params, loss, 0, seed, 1e-4, 1e-6);
}

TEST(Gradients, ConvolutionsMatchFiniteDifferences) {
  Parameter<double> x(random_tensor<double>({2, 3, 5, 5}, 21));
  Parameter<double> w(random_tensor<double>({4, 3, 3, 3}, 22));
  Parameter<double> b(random_tensor<double>({4}, 23));
  auto r = op_grad_check({&x, &w, &b}, [&] { return ops::conv2d(leaf(x), leaf(w), leaf(b), 2, 1); }, 1);
  EXPECT_EQ(r.passed, r.checked) << "worst " << r.worst_rel;

  Parameter<double> wt(random_tensor<double>({3, 2, 4, 4}, 24));
  Parameter<double> bt(random_tensor<double>({2}, 25));
  r = op_grad_check({&x, &wt, &bt}, [&] { return ops::conv_transpose2d(leaf(x), leaf(wt), leaf(bt), 2, 1); }, 2);
  EXPECT_EQ(r.passed, r.checked) << "worst " << r.worst_rel;
}

TEST(Gradients, ShapeOpsMatchFiniteDifferences) {
  Parameter<double> x(random_tensor<double>({2, 8, 3, 4}, 31));
  Parameter<double> y(random_tensor<double>({2, 3, 3, 4}, 32));
  auto r = op_grad_check({&x}, [&] { return ops::pixel_shuffle(leaf(x), 2); }, 3);
  EXPECT_EQ(r.passed, r.checked);
  r = op_grad_check({&x, &y}, [&] { return ops::concat<double>({leaf(y), leaf(x), leaf(y)}); }, 4);
  EXPECT_EQ(r.passed, r.checked);
  r = op_grad_check({&y}, [&] { return ops::resize_bicubic(leaf(y), 7, 13); }, 5);
  EXPECT_EQ(r.passed, r.checked);
  r = op_grad_check({&x}, [&] { return ops::resize_bicubic(leaf(x), 2, 2); }, 6);
  EXPECT_EQ(r.passed, r.checked);
  r = op_grad_check({&x}, [&] { return ops::global_avg_pool(leaf(x)); }, 7);
  EXPECT_EQ(r.passed, r.checked);
  r = op_grad_check({&x}, [&] { return ops::max_pool2(leaf(x)); }, 8);
  EXPECT_EQ(r.passed, r.checked);
}

TEST(Gradients, ActivationsMatchFiniteDifferences) {
  // Values kept away from the kinks at 0, -3 and 3.
  Tensor<double> v = random_tensor<double>({1, 2, 4, 4}, 41, -5.0, 5.0);
  for (auto& e : v.values()) {
    for (double kink : {0.0, -3.0, 3.0})
      if (std::abs(e - kink) < 0.05) e = kink + 0.1;
  }
  Parameter<double> x(v);
  auto r = op_grad_check({&x}, [&] { return ops::hswish(leaf(x)); }, 9);
  EXPECT_EQ(r.passed, r.checked) << "worst " << r.worst_rel;
  r = op_grad_check({&x}, [&] { return ops::leaky_relu(leaf(x), 0.2); }, 10);
  EXPECT_EQ(r.passed, r.checked);
  r = op_grad_check({&x}, [&] { return ops::add(ops::scale(leaf(x), 3.0), leaf(x)); }, 11);
  EXPECT_EQ(r.passed, r.checked);
}

TEST(Hswish, AnchorsAndShape) {
  EXPECT_EQ(ops::hswish(0.0), 0.0);
  EXPECT_EQ(ops::hswish(-3.0), 0.0);
  EXPECT_EQ(ops::hswish(-7.5), 0.0);
  EXPECT_EQ(ops::hswish(3.0), 3.0);
  EXPECT_EQ(ops::hswish(10.0), 10.0);
  EXPECT_NEAR(ops::hswish(1.0), 1.0 * 4.0 / 6.0, 1e-15);
  EXPECT_NEAR(ops::hswish(-1.0), -1.0 * 2.0 / 6.0, 1e-15);
}

TEST(Hswish, ContinuousEverywhereMonotoneAboveMinimum) {
  double prev = ops::hswish(-6.0);
  for (int i = 1; i <= 16000; ++i) {
    const double x = -6.0 + i * 1e-3;
    const double v = ops::hswish(x);
    EXPECT_LT(std::abs(v - prev), 5e-3) << "jump at " << x;
    if (x > -1.5) EXPECT_GE(v, prev) << "at " << x;
    prev = v;
  }
  // The quadratic piece dips to its minimum at -1.5.
  EXPECT_NEAR(ops::hswish(-1.5), -0.375, 1e-15);
  EXPECT_LT(ops::hswish(-1.5), ops::hswish(-3.0));
}

// Output channel c, pixel (y, x) in an r-times larger grid is copied from the
// input channel whose sub-pixel phase is (y mod r, x mod r).
Tensor<int> shuffle_oracle(const Tensor<int>& in, int r) {
  const int n = in.dim(0), c = in.dim(1) / (r * r), h = in.dim(2), w = in.dim(3);
  Tensor<int> out({n, c, h * r, w * r});
  std::size_t k = 0;
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h * r; ++y)
        for (int x = 0; x < w * r; ++x) {
          const int src_c = ch * r * r + (y % r) * r + (x % r);
          out[k++] = in.at(b, src_c, y / r, x / r);
        }
  return out;
}

TEST(PixelShuffle, MatchesEnumerationOracleAndInverts) {
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<int> rdist(1, 4), cdist(1, 4), sdist(1, 9);
  for (int t = 0; t < 200; ++t) {
    const int r = rdist(rng), c = cdist(rng), h = sdist(rng), w = sdist(rng);
    Tensor<int> x({1, c * r * r, h, w});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<int>(i);
    const Tensor<int> y = ops::pixel_shuffle(x, r);
    ASSERT_EQ(y, shuffle_oracle(x, r)) << "c=" << c << " r=" << r << " h=" << h << " w=" << w;
    ASSERT_EQ(ops::pixel_unshuffle(y, r), x);
  }
}

TEST(PixelShuffle, SmallAnchors) {
  Tensor<double> x({1, 4, 1, 1}, std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(ops::pixel_shuffle(x, 2), (Tensor<double>({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4})));
  const auto big = random_tensor<double>({1, 16, 8, 8}, 5);
  EXPECT_EQ(ops::pixel_shuffle(big, 1), big);
  const auto y = ops::pixel_shuffle(big, 4);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 32, 32}));
  auto a = big.storage(), b = y.storage();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_THROW(ops::pixel_shuffle(Tensor<double>({1, 6, 2, 2}), 2), ShapeError);
}

TEST(ResizeBicubic, MatchesDirectKernelSummation) {
  const int sizes[][4] = {{8, 8, 32, 32}, {7, 5, 13, 21}, {32, 32, 8, 8}, {20, 12, 5, 3}, {6, 6, 6, 6}, {1, 1, 4, 4}};
  int seed = 50;
  for (const auto& s : sizes) {
    const auto img = random_tensor<double>({1, 1, s[0], s[1]}, ++seed, 0.0, 1.0);
    const auto got = ops::resize_bicubic(img, s[2], s[3]);
    const auto want = testing::direct_resize_oracle(img.storage(), s[0], s[1], s[2], s[3]);
    for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12) << s[0] << "x" << s[1] << "->" << s[2] << "x" << s[3];
  }
}

TEST(ResizeBicubic, ConstantAndIdentity) {
  const Tensor<double> flat({1, 2, 5, 7}, 0.37);
  for (const auto& d : {std::pair{20, 28}, std::pair{2, 3}, std::pair{5, 7}}) {
    const auto out = ops::resize_bicubic(flat, d.first, d.second);
    for (double v : out.values()) EXPECT_NEAR(v, 0.37, 1e-14);
  }
  const auto x = random_tensor<double>({1, 3, 9, 6}, 77);
  EXPECT_LT(max_abs_diff(ops::resize_bicubic(x, 9, 6), x), 1e-15);
}

TEST(ResizeBicubic, UpscaleIsTranslationEquivariantOnInteriors) {
  const int h = 16, w = 16, s = 4;
  const auto x = random_tensor<double>({1, 1, h, w}, 88, 0.0, 1.0);
  Tensor<double> shifted({1, 1, h, w});
  for (int y = 0; y < h; ++y)
    for (int i = 0; i < w; ++i) shifted.at(0, 0, y, i) = x.at(0, 0, y, std::max(0, i - 1));
  const auto a = ops::resize_bicubic(x, h * s, w * s);
  const auto b = ops::resize_bicubic(shifted, h * s, w * s);
  for (int y = 4 * s; y < (h - 4) * s; ++y)
    for (int i = 4 * s; i < (w - 4) * s; ++i) ASSERT_NEAR(b.at(0, 0, y, i), a.at(0, 0, y, i - s), 1e-12);
}

TEST(Ops, LossHelperAnchors) {
  EXPECT_NEAR(ops::softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(ops::softplus(-800.0), 0.0, 1e-300);
  EXPECT_NEAR(ops::softplus(800.0), 800.0, 1e-9);
  EXPECT_EQ(ops::sigmoid(0.0), 0.5);
  const auto z = random_tensor<double>({3, 1, 1, 1}, 3);
  const double got = ops::bce_with_logits(constant(z), 1.0).value()[0];
  double want = 0;
  for (double v : z.values()) want += -std::log(1.0 / (1.0 + std::exp(-v)));
  EXPECT_NEAR(got, want / 3.0, 1e-12);
}

}  // namespace
}  // namespace dcrsr
