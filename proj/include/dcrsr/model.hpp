// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dcrsr/checkpoint.hpp"
#include "dcrsr/generator.hpp"
#include "dcrsr/image.hpp"
#include "dcrsr/reconstruction.hpp"

namespace dcrsr {

struct ModelConfig {
  GeneratorConfig generator;
  DRMConfig drm;

  void validate() const {
    generator.validate();
    drm.validate();
    if (generator.scale != drm.scale) throw ConfigError("generator and DRM scale differ");
  }

  std::string describe() const {
    std::ostringstream os;
    os << "n_c=" << generator.n_c << ";n_g=" << generator.n_g << ";blocks=" << generator.num_blocks
       << ";scale=" << generator.scale << ";shortcut=";
    if (generator.inter_block_shortcut) {
      os << generator.inter_block_shortcut->first << ',' << generator.inter_block_shortcut->second;
    } else {
      os << "none";
    }
    os << ";fusion=" << to_string(drm.fusion_mode);
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a(describe()); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Generator trunk + dual reconstruction: LR image -> SR image.
template <class T>
struct SRModel {
  ModelConfig config;
  GeneratorParams<T> gen;
  DRMParams<T> drm;

  static SRModel init(const ModelConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    SRModel m;
    m.config = cfg;
    m.gen = init_params<T>(cfg.generator, rng);
    m.drm = init_drm_params<T>(cfg.generator.n_c, cfg.drm, rng);
    return m;
  }

  static SRModel init(const ModelConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return init(cfg, rng);
  }

  // Zero-valued parameters with the topology of `cfg`.
  static SRModel zeros(const ModelConfig& cfg) {
    cfg.validate();
    SRModel m;
    m.config = cfg;
    m.gen = GeneratorParams<T>(cfg.generator);
    m.drm = DRMParams<T>(cfg.generator.n_c, cfg.drm);
    return m;
  }

  Var<T> forward(const Var<T>& x_lr) {
    return drm_forward(generator_trunk_forward(x_lr, gen, config.generator), drm, config.drm);
  }

  // Gradient-free forward of an (N,3,H,W) batch. Output is not clamped.
  Tensor<T> infer(const Tensor<T>& x_lr) {
    NoGradGuard guard;
    return forward(constant(x_lr)).value();
  }

  template <class F>
  void visit(F&& f) {
    gen.visit("gen", f);
    drm.visit("drm", f);
  }
  template <class F>
  void visit(F&& f) const {
    gen.visit("gen", f);
    drm.visit("drm", f);
  }

  void zero_grad() {
    visit([](const std::string&, Parameter<T>& p) { p.zero_grad(); });
  }

  std::size_t num_params() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Parameter<T>& p) { n += p.value.size(); });
    return n;
  }

  template <class U>
  SRModel<U> cast() const {
    SRModel<U> out = SRModel<U>::zeros(config);
    std::vector<const Parameter<T>*> src;
    visit([&](const std::string&, const Parameter<T>& p) { src.push_back(&p); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Parameter<U>& p) { cast_into(*src[i++], p); });
    return out;
  }

  std::vector<NamedTensor> to_tensors() const {
    std::vector<NamedTensor> out;
    visit([&](const std::string& name, const Parameter<T>& p) { out.push_back({name, p.value.template cast<float>()}); });
    return out;
  }

  // Loads gen.* / drm.* tensors; every name and shape must match this topology.
  void load_tensors(const Checkpoint& ck) {
    visit([&](const std::string& name, Parameter<T>& p) {
      const NamedTensor* t = ck.find(name);
      if (!t) throw CheckpointError("checkpoint lacks tensor " + name + " (topology mismatch)");
      if (t->tensor.shape() != p.value.shape()) {
        throw CheckpointError("tensor " + name + " has shape " + shape_str(t->tensor.shape()) + ", model expects " +
                              shape_str(p.value.shape()) + " (topology mismatch)");
      }
      p.value = t->tensor.template cast<T>();
      p.zero_grad();
    });
  }
};

// Super-resolves one RGB image; the result is clamped to [0,1].
inline ImageTensor super_resolve(SRModel<float>& m, const ImageTensor& lr) {
  if (lr.channels != 3) throw ShapeError("super_resolve expects an RGB image");
  ImageTensor sr = from_batch(m.infer(to_batch<float>(lr)), 0, ColorSpace::rgb);
  for (float& v : sr.data) v = std::clamp(v, 0.0f, 1.0f);
  return sr;
}

}  // namespace dcrsr
