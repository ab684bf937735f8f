// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dcrsr/discriminator.hpp"
#include "dcrsr/fusion.hpp"
#include "dcrsr/losses.hpp"
#include "dcrsr/model.hpp"
#include "test_util.hpp"

namespace dcrsr {
namespace {

using testing::collect_params;
using testing::finite_difference_check;
using testing::random_tensor;

GeneratorConfig small_gen(int n_c = 4, int n_g = 4) {
  GeneratorConfig g;
  g.n_c = n_c;
  g.n_g = n_g;
  return g;
}

ModelConfig small_model(int n_c = 4, int n_g = 4, FusionMode mode = FusionMode::concat_conv) {
  ModelConfig m;
  m.generator = small_gen(n_c, n_g);
  m.drm.fusion_mode = mode;
  return m;
}

// L1 gradient checks place the target outside the output range so every
// residual keeps its sign across the finite-difference stencil.

// ---- generator ------------------------------------------------------------

TEST(DcrBlock, ZeroResidualBranchesGiveIdentity) {
  std::mt19937_64 rng(1);
  auto p = init_params<double>(small_gen(6, 5), rng);
  auto& b = p.blocks[0];
  b.f_c4.zero();
  b.f_m2.zero();
  const auto x = random_tensor<double>({2, 6, 7, 5}, 2);
  EXPECT_EQ(dcr_block_forward(constant(x), b).value(), x);
}

TEST(DcrBlock, ShapeAndChannelCheck) {
  std::mt19937_64 rng(1);
  auto p = init_params<double>(small_gen(6, 5), rng);
  EXPECT_EQ(dcr_block_forward(constant(random_tensor<double>({1, 6, 4, 9}, 3)), p.blocks[0]).shape(), (Shape{1, 6, 4, 9}));
  EXPECT_THROW(dcr_block_forward(constant(random_tensor<double>({1, 5, 4, 4}, 3)), p.blocks[0]), ShapeError);
}

TEST(DcrBlock, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  auto p = init_params<double>(small_gen(4, 3), rng);
  auto& b = p.blocks[1];
  const auto x = random_tensor<double>({1, 4, 6, 6}, 5);
  const auto target = random_tensor<double>({1, 4, 6, 6}, 6, 2.0, 3.0);
  std::vector<Parameter<double>*> params;
  b.visit("b", [&](const std::string&, Parameter<double>& q) { params.push_back(&q); });
  const auto r = finite_difference_check(
      params, [&] { return pixel_loss(dcr_block_forward(constant(x), b), constant(target)); }, 300, 7);
  EXPECT_GE(r.pass_fraction(), 0.99) << "worst " << r.worst_rel;
}

TEST(Generator, TrunkCollapsesToHeadWhenResidualsAreZero) {
  std::mt19937_64 rng(8);
  const auto cfg = small_gen(5, 4);
  auto p = init_params<double>(cfg, rng);
  for (auto& b : p.blocks) {
    b.f_c4.zero();
    b.f_m2.zero();
  }
  p.trunk.zero();
  const auto x = random_tensor<double>({2, 3, 6, 7}, 9, 0.0, 1.0);
  const auto head = conv_same(p.head, constant(x)).value();
  EXPECT_EQ(generator_trunk_forward(constant(x), p, cfg).value(), head);
}

TEST(Generator, InterBlockShortcutIsWired) {
  std::mt19937_64 rng(10);
  auto cfg = small_gen(4, 4);
  auto p = init_params<double>(cfg, rng);
  const auto x = random_tensor<double>({1, 3, 6, 6}, 11, 0.0, 1.0);
  const auto with = generator_trunk_forward(constant(x), p, cfg).value();
  cfg.inter_block_shortcut.reset();
  const auto without = generator_trunk_forward(constant(x), p, cfg).value();
  EXPECT_GT(max_abs_diff(with, without), 0.0);

  // Reference: chain the blocks by hand.
  cfg.inter_block_shortcut = std::pair{0, 2};
  const auto f0 = conv_same(p.head, constant(x));
  const auto b0 = dcr_block_forward(f0, p.blocks[0]);
  const auto b1 = dcr_block_forward(b0, p.blocks[1]);
  const auto b2 = ops::add(dcr_block_forward(b1, p.blocks[2]), f0);
  const auto want = ops::add(f0, conv_same(p.trunk, b2)).value();
  EXPECT_EQ(generator_trunk_forward(constant(x), p, cfg).value(), want);
}

TEST(Generator, ConfigValidation) {
  auto cfg = small_gen();
  cfg.inter_block_shortcut = std::pair{1, 1};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.inter_block_shortcut = std::pair{0, 3};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.inter_block_shortcut.reset();
  cfg.scale = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Generator, InitIsDeterministicAndResidualScaled) {
  const auto cfg = small_gen(16, 8);
  std::mt19937_64 r1(0), r2(0), r3(1);
  const auto a = init_params<double>(cfg, r1);
  const auto b = init_params<double>(cfg, r2);
  const auto c = init_params<double>(cfg, r3);
  EXPECT_EQ(a.blocks[2].f_c3.weight.value, b.blocks[2].f_c3.weight.value);
  EXPECT_EQ(a.trunk.weight.value, b.trunk.weight.value);
  EXPECT_NE(a.head.weight.value, c.head.weight.value);
  for (const auto* bias : {&a.head.bias, &a.blocks[0].f_c2.bias, &a.trunk.bias})
    for (double v : bias->value.values()) EXPECT_EQ(v, 0.0);

  auto rms = [](const Tensor<double>& t) {
    double s = 0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s / static_cast<double>(t.size()));
  };
  // f_c4 has fan-in n_c + 3 n_g = 40 and a 0.1 factor.
  const double expect_c4 = 0.1 * leaky_gain() / std::sqrt(40.0 * 9.0);
  EXPECT_NEAR(rms(a.blocks[0].f_c4.weight.value) / expect_c4, 1.0, 0.1);
  const double expect_c1 = leaky_gain() / std::sqrt(16.0 * 9.0);
  EXPECT_NEAR(rms(a.blocks[0].f_c1.weight.value) / expect_c1, 1.0, 0.1);

  // Near-identity at init: the residual path is a small correction of f0.
  auto p = a;
  const auto x = random_tensor<double>({1, 3, 12, 12}, 12, 0.0, 1.0);
  const auto head = conv_same(p.head, constant(x)).value();
  const auto out = generator_trunk_forward(constant(x), p, cfg).value();
  double diff = 0, ref = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    diff += std::abs(out[i] - head[i]);
    ref += std::abs(head[i]);
  }
  EXPECT_LT(diff / ref, 0.5);
}

// ---- reconstruction ---------------------------------------------------------

TEST(Drm, U1WithZeroTransposedConvsIsBicubic) {
  std::mt19937_64 rng(13);
  auto p = init_drm_params<float>(5, DRMConfig{}, rng);
  for (auto& t : p.u1_tconv) t.zero();
  const auto x = random_tensor<float>({2, 5, 7, 9}, 14);
  const auto u1 = upsampler_u1(constant(x), p).value();
  EXPECT_EQ(u1, ops::resize_bicubic(x, 28, 36));
  // Same values as the image resizer applied plane by plane.
  ImageTensor plane(1, 7, 9, ColorSpace::feature);
  std::copy_n(x.data() + 3 * 63, 63, plane.data.begin());
  const ImageTensor up = bicubic_resize(plane, 28, 36);
  for (int y = 0; y < 28; ++y)
    for (int i = 0; i < 36; ++i) ASSERT_EQ(up.at(0, y, i), u1.at(0, 3, y, i));
}

TEST(Drm, ConstantFeatureThroughZeroU1StaysConstant) {
  std::mt19937_64 rng(15);
  auto p = init_drm_params<double>(3, DRMConfig{}, rng);
  for (auto& t : p.u1_tconv) t.zero();
  const auto out = upsampler_u1(constant(Tensor<double>({1, 3, 4, 4}, 0.25)), p).value();
  for (double v : out.values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Drm, PathShapesForScaleFourAndTwo) {
  for (int scale : {4, 2}) {
    DRMConfig cfg;
    cfg.scale = scale;
    std::mt19937_64 rng(16);
    auto p = init_drm_params<double>(4, cfg, rng);
    const auto x = constant(random_tensor<double>({1, 4, 8, 5}, 17));
    EXPECT_EQ(upsampler_u1(x, p).shape(), (Shape{1, 4, 8 * scale, 5 * scale}));
    EXPECT_EQ(upsampler_u2(x, p).shape(), (Shape{1, 4, 8 * scale, 5 * scale}));
    for (auto mode : {FusionMode::concat_conv, FusionMode::add}) {
      cfg.fusion_mode = mode;
      EXPECT_EQ(drm_forward(x, p, cfg).shape(), (Shape{1, 3, 8 * scale, 5 * scale}));
    }
  }
}

TEST(Drm, TensorNamesFollowLayout) {
  std::mt19937_64 rng(18);
  const auto p = init_drm_params<float>(4, DRMConfig{}, rng);
  std::vector<std::string> names;
  p.visit("drm", [&](const std::string& n, const Parameter<float>&) { names.push_back(n); });
  const std::vector<std::string> want{"drm.u1_tconv1.weight", "drm.u1_tconv1.bias", "drm.u1_tconv2.weight",
                                      "drm.u1_tconv2.bias",   "drm.u2_conv1.weight", "drm.u2_conv1.bias",
                                      "drm.u2_conv2.weight",  "drm.u2_conv2.bias",   "drm.u2_conv3.weight",
                                      "drm.u2_conv3.bias",    "drm.fuse_conv.weight", "drm.fuse_conv.bias",
                                      "drm.out_conv.weight",  "drm.out_conv.bias"};
  EXPECT_EQ(names, want);
  EXPECT_EQ(p.u2_conv[0].weight.value.shape(), (Shape{16, 4, 3, 3}));
  EXPECT_EQ(p.u1_tconv[0].weight.value.shape(), (Shape{4, 4, 4, 4}));
  EXPECT_EQ(p.fuse_conv.weight.value.shape(), (Shape{4, 8, 3, 3}));
  EXPECT_EQ(p.out_conv.weight.value.shape(), (Shape{3, 4, 3, 3}));
}

TEST(Drm, ZeroFinalU2ConvGivesZero) {
  std::mt19937_64 rng(19);
  auto p = init_drm_params<double>(2, DRMConfig{}, rng);
  p.u2_final.zero();
  const auto out = upsampler_u2(constant(random_tensor<double>({1, 2, 4, 4}, 20)), p).value();
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Drm, IcnrInitMakesSubPixelsAgree) {
  std::mt19937_64 rng(21);
  auto p = init_drm_params<double>(3, DRMConfig{}, rng);
  const auto x = constant(random_tensor<double>({1, 3, 5, 5}, 22));
  const auto y = ops::pixel_shuffle(conv_same(p.u2_conv[0], x), 2).value();
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        for (int d = 1; d < 4; ++d) EXPECT_EQ(y.at(0, c, 2 * i + d / 2, 2 * j + d % 2), y.at(0, c, 2 * i, 2 * j));
}

TEST(Drm, FusionModesDifferAndWidthIsChecked) {
  std::mt19937_64 rng(0);
  auto p = init_drm_params<double>(4, DRMConfig{}, rng);
  const auto x = constant(random_tensor<double>({1, 4, 6, 6}, 23));
  DRMConfig add_cfg;
  add_cfg.fusion_mode = FusionMode::add;
  EXPECT_GT(max_abs_diff(drm_forward(x, p, DRMConfig{}).value(), drm_forward(x, p, add_cfg).value()), 0.0);
  EXPECT_THROW(drm_forward(constant(random_tensor<double>({1, 5, 6, 6}, 1)), p, DRMConfig{}), ShapeError);
  EXPECT_EQ(fusion_mode_from_string("add"), FusionMode::add);
  EXPECT_THROW(fusion_mode_from_string("sum"), ConfigError);
}

TEST(Drm, U2GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(24);
  auto p = init_drm_params<double>(2, DRMConfig{}, rng);
  const auto x = random_tensor<double>({1, 2, 4, 4}, 25);
  const auto target = random_tensor<double>({1, 2, 16, 16}, 26, 2.0, 3.0);
  std::vector<Parameter<double>*> params;
  for (auto* c : {&p.u2_conv[0], &p.u2_conv[1], &p.u2_final})
    c->visit("u2", [&](const std::string&, Parameter<double>& q) { params.push_back(&q); });
  const auto r = finite_difference_check(
      params, [&] { return pixel_loss(upsampler_u2(constant(x), p), constant(target)); }, 0, 27);
  EXPECT_GE(r.pass_fraction(), 0.99) << "worst " << r.worst_rel;
}

// ---- full model -------------------------------------------------------------

TEST(SrModel, FullGradientMatchesFiniteDifferences) {
  for (auto mode : {FusionMode::concat_conv, FusionMode::add}) {
    auto m = SRModel<double>::init(small_model(4, 4, mode), 28);
    const auto x = random_tensor<double>({1, 3, 8, 8}, 29, 0.0, 1.0);
    const auto hr = random_tensor<double>({1, 3, 32, 32}, 30, 2.0, 3.0);
    // A 1e-4 stencil rarely straddles a leaky-ReLU kink at this depth.
    const auto r = finite_difference_check(
        collect_params(m), [&] { return pixel_loss(m.forward(constant(x)), constant(hr)); }, 500, 31, 1e-4);
    EXPECT_GE(r.pass_fraction(), 0.99) << to_string(mode) << " worst " << r.worst_rel;
  }
}

TEST(SrModel, OddSizesAndScaleTwo) {
  auto m = SRModel<float>::init(small_model(), 32);
  EXPECT_EQ(m.infer(random_tensor<float>({2, 3, 9, 13}, 33, 0, 1)).shape(), (Shape{2, 3, 36, 52}));
  auto cfg = small_model();
  cfg.generator.scale = cfg.drm.scale = 2;
  auto m2 = SRModel<float>::init(cfg, 32);
  EXPECT_EQ(m2.infer(random_tensor<float>({1, 3, 9, 13}, 33, 0, 1)).shape(), (Shape{1, 3, 18, 26}));
  EXPECT_THROW(m.infer(random_tensor<float>({1, 4, 8, 8}, 34)), ShapeError);
}

TEST(SrModel, InitDeterminismAndCast) {
  const auto a = SRModel<float>::init(small_model(), 7);
  const auto b = SRModel<float>::init(small_model(), 7);
  const auto ta = a.to_tensors(), tb = b.to_tensors();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].name, tb[i].name);
    EXPECT_EQ(ta[i].tensor, tb[i].tensor);
  }
  const auto d = a.cast<double>().cast<float>().to_tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i].tensor, d[i].tensor);
  EXPECT_GT(a.num_params(), 0u);
}

// ---- discriminator ------------------------------------------------------------

TEST(Discriminator, LayoutAndSizeAgnosticLogits) {
  DiscriminatorConfig cfg;
  cfg.base_width = 2;
  std::mt19937_64 rng(35);
  auto d = init_discriminator<double>(cfg, rng);
  int convs = 0;
  d.visit("disc", [&](const std::string& n, const Parameter<double>&) { convs += n.ends_with(".weight"); });
  EXPECT_EQ(convs, 14);
  EXPECT_EQ(d.convs[12].weight.value.dim(0), 16);
  for (auto hw : {std::pair{32, 32}, std::pair{48, 40}, std::pair{64, 64}}) {
    const auto logits = discriminator_forward(constant(random_tensor<double>({3, 3, hw.first, hw.second}, 36, 0, 1)), d);
    EXPECT_EQ(logits.shape(), (Shape{3, 1, 1, 1}));
    EXPECT_TRUE(logits.value().all_finite());
  }
  EXPECT_THROW(discriminator_forward(constant(random_tensor<double>({1, 3, 31, 64}, 1)), d), ShapeError);
  EXPECT_THROW(discriminator_forward(constant(random_tensor<double>({1, 1, 32, 32}, 1)), d), ShapeError);
}

TEST(Discriminator, ZeroParamsGiveZeroLogitAndInitIsSeeded) {
  DiscriminatorConfig cfg;
  cfg.base_width = 2;
  std::mt19937_64 r1(3), r2(3);
  auto a = init_discriminator<double>(cfg, r1);
  auto b = init_discriminator<double>(cfg, r2);
  const auto x = constant(random_tensor<double>({2, 3, 32, 32}, 37, 0, 1));
  EXPECT_EQ(discriminator_forward(x, a).value(), discriminator_forward(x, b).value());
  a.visit("d", [](const std::string&, Parameter<double>& p) { p.value.zero(); });
  const auto zero_logits = discriminator_forward(x, a);
  for (double v : zero_logits.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Discriminator, GradientMatchesFiniteDifferences) {
  DiscriminatorConfig cfg;
  cfg.base_width = 2;
  std::mt19937_64 rng(38);
  auto d = init_discriminator<double>(cfg, rng);
  const auto real = random_tensor<double>({2, 3, 32, 32}, 39, 0, 1);
  const auto fake = random_tensor<double>({2, 3, 32, 32}, 40, 0, 1);
  const auto r = finite_difference_check(
      collect_params(d),
      [&] { return discriminator_loss(discriminator_forward(constant(real), d), discriminator_forward(constant(fake), d)); },
      300, 41);
  EXPECT_GE(r.pass_fraction(), 0.99) << "worst " << r.worst_rel;
}

// ---- fusion ---------------------------------------------------------------

TEST(Fusion, EndpointsAreExactAndSelfFusionIsFixed) {
  const auto sam = SRModel<float>::init(small_model(), 1);
  const auto vam = SRModel<float>::init(small_model(), 2);
  auto same = [](const SRModel<float>& a, const SRModel<float>& b) {
    const auto ta = a.to_tensors(), tb = b.to_tensors();
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (!(ta[i].tensor == tb[i].tensor)) return false;
    return true;
  };
  EXPECT_TRUE(same(fuse_models(sam, vam, 1.0), sam));
  EXPECT_TRUE(same(fuse_models(sam, vam, 0.0), vam));
  for (double a : {0.0, 0.3, 0.8, 1.0}) EXPECT_TRUE(same(fuse_models(sam, sam, a), sam)) << a;
}

TEST(Fusion, InterpolatesEveryElementAgainstLoopOracle) {
  const auto sam = SRModel<double>::init(small_model(), 3);
  const auto vam = SRModel<double>::init(small_model(), 4);
  for (double alpha : {0.8, 0.5, 0.123}) {
    const auto fused = fuse_models(sam, vam, alpha);
    std::vector<const Tensor<double>*> s, v;
    sam.visit([&](const std::string&, const Parameter<double>& p) { s.push_back(&p.value); });
    vam.visit([&](const std::string&, const Parameter<double>& p) { v.push_back(&p.value); });
    std::size_t k = 0;
    fused.visit([&](const std::string&, const Parameter<double>& p) {
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double want = alpha * (*s[k])[i] + (1.0 - alpha) * (*v[k])[i];
        ASSERT_NEAR(p.value[i], want, 1e-12);
      }
      ++k;
    });
    EXPECT_EQ(k, s.size());
  }
}

TEST(Fusion, RejectsBadAlphaAndTopologyMismatch) {
  const auto a = SRModel<float>::init(small_model(), 1);
  const auto b = SRModel<float>::init(small_model(6, 4), 2);
  EXPECT_THROW(fuse_models(a, a, 1.5), FusionError);
  EXPECT_THROW(fuse_models(a, a, -0.1), FusionError);
  EXPECT_THROW(fuse_models(a, a, std::nan("")), FusionError);
  EXPECT_THROW(fuse_models(a, b, 0.5), FusionError);
}

TEST(Fusion, OutputBlendIsElementwise) {
  const Tensor<double> x({1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  const Tensor<double> y({1, 1, 1, 2}, std::vector<double>{1.0, 3.0});
  EXPECT_EQ(blend_outputs(x, y, 0.25), (Tensor<double>({1, 1, 1, 2}, std::vector<double>{0.75, 2.5})));
}

}  // namespace
}  // namespace dcrsr
