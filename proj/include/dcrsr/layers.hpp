// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <random>
#include <string>

#include "dcrsr/autograd.hpp"
#include "dcrsr/ops.hpp"

namespace dcrsr {

// Convolution weights plus bias. For regular convolutions the weight is
// (out, in, k, k); transposed convolutions store (in, out, k, k).
template <class T>
struct ConvParams {
  Parameter<T> weight;
  Parameter<T> bias;

  ConvParams() = default;
  ConvParams(int w0, int w1, int k, int bias_size)
      : weight(Tensor<T>({w0, w1, k, k})), bias(Tensor<T>({bias_size})) {}

  static ConvParams conv(int out, int in, int k) { return ConvParams(out, in, k, out); }
  static ConvParams transposed(int in, int out, int k) { return ConvParams(in, out, k, out); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  void zero() {
    weight.value.zero();
    bias.value.zero();
  }
};

// Same-padding convolution for odd kernels.
template <class T>
Var<T> conv_same(ConvParams<T>& p, const Var<T>& x) {
  const int k = p.weight.value.dim(2);
  return ops::conv2d(x, leaf(p.weight), leaf(p.bias), 1, k / 2);
}

template <class T>
Var<T> conv_strided(ConvParams<T>& p, const Var<T>& x, int stride) {
  const int k = p.weight.value.dim(2);
  return ops::conv2d(x, leaf(p.weight), leaf(p.bias), stride, k / 2);
}

// kernel 4, stride 2, padding 1: output exactly doubles.
template <class T>
Var<T> tconv_double(ConvParams<T>& p, const Var<T>& x) {
  return ops::conv_transpose2d(x, leaf(p.weight), leaf(p.bias), 2, 1);
}

inline constexpr double kLeakySlope = 0.2;

template <class T>
Var<T> lrelu(const Var<T>& x) {
  return ops::leaky_relu(x, static_cast<T>(kLeakySlope));
}

// Fan-in scaled normal init; biases zero. `gain` follows the activation
// that consumes the layer output.
template <class T>
void kaiming_normal(Parameter<T>& w, int fan_in, double gain, double extra_scale, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
  for (auto& v : w.value.values()) v = static_cast<T>(nd(rng) * extra_scale);
}

inline double leaky_gain(double slope = kLeakySlope) { return std::sqrt(2.0 / (1.0 + slope * slope)); }

template <class T>
void init_conv(ConvParams<T>& p, double gain, double extra_scale, std::mt19937_64& rng) {
  const auto& s = p.weight.value.shape();
  kaiming_normal(p.weight, s[1] * s[2] * s[3], gain, extra_scale, rng);
  p.bias.value.zero();
}

template <class T, class U>
void cast_into(const Parameter<T>& from, Parameter<U>& to) {
  to.value = from.value.template cast<U>();
  to.grad = Tensor<U>(to.value.shape());
  to.trainable = from.trainable;
}

}  // namespace dcrsr
