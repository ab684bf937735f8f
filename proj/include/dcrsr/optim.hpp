// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dcrsr/autograd.hpp"
#include "dcrsr/checkpoint.hpp"

namespace dcrsr {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, Tensor<float>> m;
  std::map<std::string, Tensor<float>> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;

  // Moments as checkpoint tensors "<prefix>.m.<param>" / "<prefix>.v.<param>".
  void append_tensors(const std::string& prefix, std::vector<NamedTensor>& out) const {
    for (const auto& [name, t] : m) out.push_back({prefix + ".m." + name, t});
    for (const auto& [name, t] : v) out.push_back({prefix + ".v." + name, t});
  }

  void load_tensors(const std::string& prefix, const Checkpoint& ck) {
    m.clear();
    v.clear();
    const std::string pm = prefix + ".m.", pv = prefix + ".v.";
    for (const auto& t : ck.tensors) {
      if (t.name.rfind(pm, 0) == 0) m[t.name.substr(pm.size())] = t.tensor;
      if (t.name.rfind(pv, 0) == 0) v[t.name.substr(pv.size())] = t.tensor;
    }
  }
};

// One bias-corrected Adam update over every trainable parameter of `tree`
// (anything with a visit(F) over (name, Parameter<float>&)).
template <class Tree>
void adam_step(Tree& tree, AdamState& st, double lr) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  tree.visit([&](const std::string& name, Parameter<float>& p) {
    if (!p.trainable) return;
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    auto& m = st.m[name];
    auto& v = st.v[name];
    if (m.shape() != p.value.shape()) m = Tensor<float>(p.value.shape());
    if (v.shape() != p.value.shape()) v = Tensor<float>(p.value.shape());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = st.beta1 * m[i] + (1.0 - st.beta1) * g;
      const double vi = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + st.eps);
      p.value[i] = static_cast<float>(p.value[i] - update);
    }
  });
}

}  // namespace dcrsr
