// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dcrsr/errors.hpp"

namespace dcrsr {

// Keys cubic convolution kernel with a = -0.5.
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  const double ax2 = ax * ax;
  const double ax3 = ax2 * ax;
  if (ax <= 1.0) return (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0;
  if (ax < 2.0) return a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a;
  return 0.0;
}

// Per-output-sample taps along one axis. Sample centers are aligned on pixel
// centers; when shrinking, the kernel is stretched by the reduction factor so
// the result is antialiased. Source indices are clamped to the edge.
struct AxisTaps {
  int in_size = 0;
  int out_size = 0;
  int taps = 0;                 // taps per output sample
  std::vector<int> index;       // out_size * taps
  std::vector<double> weight;   // out_size * taps, normalized to sum 1

  AxisTaps() = default;
  AxisTaps(int in, int out) : in_size(in), out_size(out) {
    if (in < 1 || out < 1) throw InvalidSize("resize dimensions must be positive");
    const double scale = static_cast<double>(in) / out;
    const double stretch = scale > 1.0 ? scale : 1.0;
    const double radius = 2.0 * stretch;
    taps = static_cast<int>(std::ceil(2.0 * radius)) + 1;
    index.resize(static_cast<std::size_t>(out) * taps);
    weight.resize(index.size());
    for (int o = 0; o < out; ++o) {
      const double center = (o + 0.5) * scale - 0.5;
      const int first = static_cast<int>(std::ceil(center - radius));
      double sum = 0.0;
      for (int t = 0; t < taps; ++t) {
        const int j = first + t;
        const double w = cubic_kernel((j - center) / stretch);
        index[o * taps + t] = j < 0 ? 0 : (j >= in ? in - 1 : j);
        weight[o * taps + t] = w;
        sum += w;
      }
      for (int t = 0; t < taps; ++t) weight[o * taps + t] /= sum;
    }
  }
};

// Separable resize of one plane: horizontal pass into `scratch` (h x ow), then
// vertical pass into `out` (oh x ow). Sums are accumulated in double. No
// clamping of values.
template <class T>
void resize_plane(const T* in, int h, int w, T* out, const AxisTaps& ty, const AxisTaps& tx,
                  std::vector<T>& scratch) {
  const int oh = ty.out_size;
  const int ow = tx.out_size;
  scratch.assign(static_cast<std::size_t>(h) * ow, T(0));
  for (int y = 0; y < h; ++y) {
    const T* row = in + static_cast<std::size_t>(y) * w;
    T* dst = scratch.data() + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int t = 0; t < tx.taps; ++t) acc += tx.weight[x * tx.taps + t] * row[tx.index[x * tx.taps + t]];
      dst[x] = static_cast<T>(acc);
    }
  }
  std::vector<double> acc(static_cast<std::size_t>(ow));
  for (int y = 0; y < oh; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int t = 0; t < ty.taps; ++t) {
      const double wgt = ty.weight[y * ty.taps + t];
      const T* src = scratch.data() + static_cast<std::size_t>(ty.index[y * ty.taps + t]) * ow;
      for (int x = 0; x < ow; ++x) acc[x] += wgt * src[x];
    }
    T* dst = out + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) dst[x] = static_cast<T>(acc[x]);
  }
}

// Adjoint of resize_plane: accumulates into `grad_in` (h x w).
template <class T>
void resize_plane_adjoint(const T* grad_out, int h, int w, T* grad_in, const AxisTaps& ty,
                          const AxisTaps& tx, std::vector<T>& scratch) {
  const int oh = ty.out_size;
  const int ow = tx.out_size;
  scratch.assign(static_cast<std::size_t>(h) * ow, T(0));
  for (int y = 0; y < oh; ++y) {
    const T* g = grad_out + static_cast<std::size_t>(y) * ow;
    for (int t = 0; t < ty.taps; ++t) {
      const T wgt = static_cast<T>(ty.weight[y * ty.taps + t]);
      T* dst = scratch.data() + static_cast<std::size_t>(ty.index[y * ty.taps + t]) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += wgt * g[x];
    }
  }
  for (int y = 0; y < h; ++y) {
    const T* src = scratch.data() + static_cast<std::size_t>(y) * ow;
    T* row = grad_in + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < ow; ++x) {
      for (int t = 0; t < tx.taps; ++t) {
        row[tx.index[x * tx.taps + t]] += static_cast<T>(tx.weight[x * tx.taps + t]) * src[x];
      }
    }
  }
}

}  // namespace dcrsr
