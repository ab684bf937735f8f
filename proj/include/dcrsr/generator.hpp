// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dcrsr/layers.hpp"

namespace dcrsr {

struct GeneratorConfig {
  int n_c = 64;        // trunk / block width
  int n_g = 32;        // dense growth channels
  int num_blocks = 3;
  int scale = 4;
  // Block `first`'s input is added to block `second`'s output.
  std::optional<std::pair<int, int>> inter_block_shortcut = std::pair{0, 1};

  void validate() const {
    if (n_c < 1 || n_g < 1 || num_blocks < 1) throw ConfigError("n_c, n_g and num_blocks must be >= 1");
    if (scale != 2 && scale != 4) throw ConfigError("scale must be 2 or 4");
    if (inter_block_shortcut) {
      auto [a, b] = *inter_block_shortcut;
      if (a < 0 || b < 0 || a >= num_blocks || b >= num_blocks || a == b) {
        throw ConfigError("inter-block shortcut indices must be distinct and < num_blocks");
      }
      if (a > b) throw ConfigError("inter-block shortcut must point forward");
    }
  }

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

// One densely connected residual block. Channel arithmetic:
// f_c1: n_c -> n_g, f_c2: n_c+n_g -> n_g, f_c3: n_c+2n_g -> n_g,
// f_c4: n_c+3n_g -> n_c, f_m2 (1x1 transition): n_g -> n_c.
template <class T>
struct DCRBlockParams {
  ConvParams<T> f_c1, f_c2, f_c3, f_c4, f_m2;

  DCRBlockParams() = default;
  DCRBlockParams(int n_c, int n_g)
      : f_c1(ConvParams<T>::conv(n_g, n_c, 3)),
        f_c2(ConvParams<T>::conv(n_g, n_c + n_g, 3)),
        f_c3(ConvParams<T>::conv(n_g, n_c + 2 * n_g, 3)),
        f_c4(ConvParams<T>::conv(n_c, n_c + 3 * n_g, 3)),
        f_m2(ConvParams<T>::conv(n_c, n_g, 1)) {}

  template <class F>
  void visit(const std::string& prefix, F&& f) { visit_impl(*this, prefix, f); }
  template <class F>
  void visit(const std::string& prefix, F&& f) const { visit_impl(*this, prefix, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    s.f_c1.visit(p + ".f_c1", f);
    s.f_c2.visit(p + ".f_c2", f);
    s.f_c3.visit(p + ".f_c3", f);
    s.f_c4.visit(p + ".f_c4", f);
    s.f_m2.visit(p + ".f_m2", f);
  }
};

template <class T>
struct GeneratorParams {
  ConvParams<T> head;
  std::vector<DCRBlockParams<T>> blocks;
  ConvParams<T> trunk;

  GeneratorParams() = default;
  explicit GeneratorParams(const GeneratorConfig& cfg)
      : head(ConvParams<T>::conv(cfg.n_c, 3, 3)),
        blocks(static_cast<std::size_t>(cfg.num_blocks), DCRBlockParams<T>(cfg.n_c, cfg.n_g)),
        trunk(ConvParams<T>::conv(cfg.n_c, cfg.n_c, 3)) {}

  template <class F>
  void visit(const std::string& prefix, F&& f) { visit_impl(*this, prefix, f); }
  template <class F>
  void visit(const std::string& prefix, F&& f) const { visit_impl(*this, prefix, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, const std::string& p, F& f) {
    s.head.visit(p + ".head", f);
    for (std::size_t i = 0; i < s.blocks.size(); ++i) s.blocks[i].visit(p + ".blocks." + std::to_string(i), f);
    s.trunk.visit(p + ".trunk", f);
  }
};

// h1 = act(f_c1(x)); h2 = act(f_c2([x,h1])); s = x + f_m2(h2);
// h3 = act(f_c3([x,h1,h2])); out = s + f_c4([x,h1,h2,h3]).
template <class T>
Var<T> dcr_block_forward(const Var<T>& x, DCRBlockParams<T>& p) {
  const int n_c = p.f_c1.weight.value.dim(1);
  if (x.shape().size() != 4 || x.dim(1) != n_c) {
    throw ShapeError("dcr block expects " + std::to_string(n_c) + " input channels, got " + shape_str(x.shape()));
  }
  Var<T> h1 = lrelu(conv_same(p.f_c1, x));
  Var<T> h2 = lrelu(conv_same(p.f_c2, ops::concat<T>({x, h1})));
  Var<T> s = ops::add(x, conv_same(p.f_m2, h2));
  Var<T> h3 = lrelu(conv_same(p.f_c3, ops::concat<T>({x, h1, h2})));
  return ops::add(s, conv_same(p.f_c4, ops::concat<T>({x, h1, h2, h3})));
}

template <class T>
Var<T> generator_trunk_forward(const Var<T>& x_lr, GeneratorParams<T>& p, const GeneratorConfig& cfg) {
  if (x_lr.shape().size() != 4 || x_lr.dim(1) != 3) {
    throw ShapeError("generator expects a 3-channel input, got " + shape_str(x_lr.shape()));
  }
  if (p.blocks.size() != static_cast<std::size_t>(cfg.num_blocks)) {
    throw ShapeError("parameter tree has a different block count than the config");
  }
  const Var<T> f0 = conv_same(p.head, x_lr);
  std::vector<Var<T>> block_inputs;
  Var<T> cur = f0;
  for (int k = 0; k < cfg.num_blocks; ++k) {
    block_inputs.push_back(cur);
    cur = dcr_block_forward(cur, p.blocks[static_cast<std::size_t>(k)]);
    if (cfg.inter_block_shortcut && cfg.inter_block_shortcut->second == k) {
      cur = ops::add(cur, block_inputs[static_cast<std::size_t>(cfg.inter_block_shortcut->first)]);
    }
  }
  return ops::add(f0, conv_same(p.trunk, cur));
}

// Fan-in normal init; residual-branch convolutions (f_c4, f_m2, trunk) are
// scaled by 0.1 so the trunk starts close to the head convolution.
template <class T>
GeneratorParams<T> init_params(const GeneratorConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  GeneratorParams<T> p(cfg);
  const double g = leaky_gain();
  init_conv(p.head, g, 1.0, rng);
  for (auto& b : p.blocks) {
    init_conv(b.f_c1, g, 1.0, rng);
    init_conv(b.f_c2, g, 1.0, rng);
    init_conv(b.f_c3, g, 1.0, rng);
    init_conv(b.f_c4, g, 0.1, rng);
    init_conv(b.f_m2, g, 0.1, rng);
  }
  init_conv(p.trunk, g, 0.1, rng);
  return p;
}

}  // namespace dcrsr
