// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "dcrsr/model.hpp"

namespace dcrsr {

// Parameter-space interpolation alpha * sam + (1 - alpha) * vam over the
// generator and DRM tensors. The endpoints are returned as exact copies.
template <class T>
SRModel<T> fuse_models(const SRModel<T>& sam, const SRModel<T>& vam, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw FusionError("alpha must lie in [0, 1]");
  if (!(sam.config == vam.config)) {
    throw FusionError("models have different topologies: " + sam.config.describe() + " vs " + vam.config.describe());
  }
  std::vector<std::pair<std::string, const Parameter<T>*>> other;
  vam.visit([&](const std::string& name, const Parameter<T>& p) { other.emplace_back(name, &p); });

  SRModel<T> out = sam;
  const T b = static_cast<T>(1.0 - alpha);
  std::size_t i = 0;
  out.visit([&](const std::string& name, Parameter<T>& p) {
    if (i >= other.size() || other[i].first != name || other[i].second->value.shape() != p.value.shape()) {
      throw FusionError("parameter trees differ at " + name);
    }
    const Tensor<T>& v = other[i++].second->value;
    if (alpha == 0.0) {
      p.value = v;
    } else if (alpha != 1.0) {
      // Written as sam + (1 - alpha)(vam - sam) so self-fusion is exact.
      for (std::size_t j = 0; j < p.value.size(); ++j) p.value[j] += b * (v[j] - p.value[j]);
    }
  });
  if (i != other.size()) throw FusionError("parameter trees differ in size");
  return out;
}

// Output-space blend alpha * sr_a + (1 - alpha) * sr_b, for comparison with
// parameter fusion.
template <class T>
Tensor<T> blend_outputs(const Tensor<T>& sr_a, const Tensor<T>& sr_b, double alpha) {
  sr_a.check_same(sr_b, "blend_outputs");
  Tensor<T> out(sr_a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = static_cast<T>(alpha) * sr_a[j] + static_cast<T>(1.0 - alpha) * sr_b[j];
  }
  return out;
}

}  // namespace dcrsr
