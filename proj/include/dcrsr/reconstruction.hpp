// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "dcrsr/layers.hpp"

namespace dcrsr {

enum class FusionMode { concat_conv, add };

inline const char* to_string(FusionMode m) { return m == FusionMode::add ? "add" : "concat_conv"; }

inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "concat_conv") return FusionMode::concat_conv;
  if (s == "add") return FusionMode::add;
  throw ConfigError("unknown fusion mode '" + s + "' (expected concat_conv or add)");
}

struct DRMConfig {
  FusionMode fusion_mode = FusionMode::concat_conv;
  int scale = 4;

  int stages() const { return scale == 4 ? 2 : 1; }
  void validate() const {
    if (scale != 2 && scale != 4) throw ConfigError("scale must be 2 or 4");
  }
  friend bool operator==(const DRMConfig&, const DRMConfig&) = default;
};

// Dual reconstruction parameters. One transposed convolution and one
// pre-shuffle convolution per x2 stage.
template <class T>
struct DRMParams {
  std::vector<ConvParams<T>> u1_tconv;  // (n_c, n_c, 4, 4) transposed
  std::vector<ConvParams<T>> u2_conv;   // (4 n_c, n_c, 3, 3)
  ConvParams<T> u2_final;               // n_c -> n_c
  ConvParams<T> fuse_conv;              // 2 n_c -> n_c
  ConvParams<T> out_conv;               // n_c -> 3

  DRMParams() = default;
  DRMParams(int n_c, const DRMConfig& cfg)
      : u1_tconv(static_cast<std::size_t>(cfg.stages()), ConvParams<T>::transposed(n_c, n_c, 4)),
        u2_conv(static_cast<std::size_t>(cfg.stages()), ConvParams<T>::conv(4 * n_c, n_c, 3)),
        u2_final(ConvParams<T>::conv(n_c, n_c, 3)),
        fuse_conv(ConvParams<T>::conv(n_c, 2 * n_c, 3)),
        out_conv(ConvParams<T>::conv(3, n_c, 3)) {}

  template <class F>
  void visit(const std::string& prefix, F&& f) { visit_impl(*this, prefix, f); }
  template <class F>
  void visit(const std::string& prefix, F&& f) const { visit_impl(*this, prefix, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    for (std::size_t i = 0; i < s.u1_tconv.size(); ++i) s.u1_tconv[i].visit(p + ".u1_tconv" + std::to_string(i + 1), f);
    for (std::size_t i = 0; i < s.u2_conv.size(); ++i) s.u2_conv[i].visit(p + ".u2_conv" + std::to_string(i + 1), f);
    s.u2_final.visit(p + ".u2_conv" + std::to_string(s.u2_conv.size() + 1), f);
    s.fuse_conv.visit(p + ".fuse_conv", f);
    s.out_conv.visit(p + ".out_conv", f);
  }
};

namespace detail {
template <class T>
void require_width(const Var<T>& x, int n_c, const char* what) {
  if (x.shape().size() != 4 || x.dim(1) != n_c) {
    throw ShapeError(std::string(what) + " expects " + std::to_string(n_c) + " channels, got " + shape_str(x.shape()));
  }
}
}  // namespace detail

// Learned transposed-convolution path plus a bicubic skip of the input.
template <class T>
Var<T> upsampler_u1(const Var<T>& x, DRMParams<T>& p) {
  const int n_c = p.u1_tconv.front().weight.value.dim(0);
  detail::require_width(x, n_c, "upsampler U1");
  const int factor = 1 << p.u1_tconv.size();
  Var<T> y = x;
  for (std::size_t i = 0; i < p.u1_tconv.size(); ++i) {
    const int h = y.dim(2), w = y.dim(3);
    y = tconv_double(p.u1_tconv[i], y);
    if (y.dim(2) != 2 * h || y.dim(3) != 2 * w) throw ShapeError("transposed convolution did not double the size");
    if (i + 1 < p.u1_tconv.size()) y = lrelu(y);
  }
  return ops::add(y, ops::resize_bicubic(x, factor * x.dim(2), factor * x.dim(3)));
}

// Convolution + x2 pixel shuffle per stage, then a final n_c -> n_c conv.
template <class T>
Var<T> upsampler_u2(const Var<T>& x, DRMParams<T>& p) {
  const int n_c = p.u2_final.weight.value.dim(1);
  detail::require_width(x, n_c, "upsampler U2");
  Var<T> y = x;
  for (auto& conv : p.u2_conv) y = ops::pixel_shuffle(lrelu(conv_same(conv, y)), 2);
  return conv_same(p.u2_final, y);
}

template <class T>
Var<T> drm_forward(const Var<T>& x, DRMParams<T>& p, const DRMConfig& cfg) {
  if (p.u1_tconv.size() != static_cast<std::size_t>(cfg.stages())) {
    throw ShapeError("DRM parameters do not match the configured scale");
  }
  const Var<T> u1 = upsampler_u1(x, p);
  const Var<T> u2 = upsampler_u2(x, p);
  if (u1.shape() != u2.shape()) {
    throw ShapeError("U1 and U2 disagree on output size: " + shape_str(u1.shape()) + " vs " + shape_str(u2.shape()));
  }
  if (cfg.fusion_mode == FusionMode::add) return conv_same(p.out_conv, ops::add(u1, u2));
  return conv_same(p.out_conv, lrelu(conv_same(p.fuse_conv, ops::concat<T>({u1, u2}))));
}

// Fills the pre-shuffle conv so all r*r sub-pixel outputs of a channel share
// the same kernel; the shuffled map then starts free of checkerboard patterns.
template <class T>
void init_icnr(ConvParams<T>& p, int r, double gain, std::mt19937_64& rng) {
  const auto& s = p.weight.value.shape();
  const int co = s[0] / (r * r), ci = s[1], k = s[2];
  ConvParams<T> sub = ConvParams<T>::conv(co, ci, k);
  init_conv(sub, gain, 1.0, rng);
  const std::size_t per = static_cast<std::size_t>(ci) * k * k;
  for (int c = 0; c < co; ++c)
    for (int j = 0; j < r * r; ++j)
      std::copy_n(sub.weight.value.data() + c * per, per, p.weight.value.data() + (c * r * r + j) * per);
  p.bias.value.zero();
}

template <class T>
DRMParams<T> init_drm_params(int n_c, const DRMConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  DRMParams<T> p(n_c, cfg);
  const double g = leaky_gain();
  // Transposed conv with stride 2 sees a quarter of its kernel per output.
  for (auto& t : p.u1_tconv) {
    kaiming_normal(t.weight, n_c * 4, g, 0.1, rng);
    t.bias.value.zero();
  }
  for (auto& c : p.u2_conv) init_icnr(c, 2, g, rng);
  init_conv(p.u2_final, 1.0, 1.0, rng);
  init_conv(p.fuse_conv, g, 1.0, rng);
  init_conv(p.out_conv, 1.0, 0.1, rng);
  p.out_conv.bias.value.fill(static_cast<T>(0.5));  // outputs start at mid-grey
  return p;
}

}  // namespace dcrsr
