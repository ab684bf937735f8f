// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "dcrsr/layers.hpp"

namespace dcrsr {

struct DiscriminatorConfig {
  int base_width = 64;  // 64 gives the standard 64/128/256/512/512 stack

  void validate() const {
    if (base_width < 1) throw ConfigError("discriminator width must be >= 1");
  }
  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

inline constexpr int kDiscriminatorMinSize = 32;

// Thirteen 3x3 convolutions in five groups (2,2,3,3,3 layers); the last conv
// of every group has stride 2. H-Swish after every conv, then global average
// pooling and a 1x1 conv to one logit.
template <class T>
struct DiscriminatorParams {
  std::vector<ConvParams<T>> convs;
  std::vector<int> strides;
  ConvParams<T> head;

  static constexpr std::array<int, 5> kGroupSizes{2, 2, 3, 3, 3};
  static constexpr std::array<int, 5> kGroupMult{1, 2, 4, 8, 8};

  DiscriminatorParams() = default;
  explicit DiscriminatorParams(const DiscriminatorConfig& cfg) {
    int in = 3;
    for (std::size_t g = 0; g < kGroupSizes.size(); ++g) {
      const int width = cfg.base_width * kGroupMult[g];
      for (int l = 0; l < kGroupSizes[g]; ++l) {
        convs.push_back(ConvParams<T>::conv(width, in, 3));
        strides.push_back(l + 1 == kGroupSizes[g] ? 2 : 1);
        in = width;
      }
    }
    head = ConvParams<T>::conv(1, in, 1);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) { visit_impl(*this, prefix, f); }
  template <class F>
  void visit(const std::string& prefix, F&& f) const { visit_impl(*this, prefix, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    for (std::size_t i = 0; i < s.convs.size(); ++i) s.convs[i].visit(p + ".conv" + std::to_string(i + 1), f);
    s.head.visit(p + ".head", f);
  }
};

// Returns logits of shape (N,1,1,1).
template <class T>
Var<T> discriminator_forward(const Var<T>& img, DiscriminatorParams<T>& p) {
  const Shape& s = img.shape();
  if (s.size() != 4 || s[1] != 3) throw ShapeError("discriminator expects 3-channel images, got " + shape_str(s));
  if (s[2] < kDiscriminatorMinSize || s[3] < kDiscriminatorMinSize) {
    throw ShapeError("discriminator input must be at least 32x32, got " + shape_str(s));
  }
  Var<T> y = img;
  for (std::size_t i = 0; i < p.convs.size(); ++i) y = ops::hswish(conv_strided(p.convs[i], y, p.strides[i]));
  return conv_same(p.head, ops::global_avg_pool(y));
}

template <class T>
DiscriminatorParams<T> init_discriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  DiscriminatorParams<T> p(cfg);
  for (auto& c : p.convs) init_conv(c, std::sqrt(2.0), 1.0, rng);
  init_conv(p.head, 1.0, 1.0, rng);
  return p;
}

}  // namespace dcrsr
