// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dcrsr/checkpoint.hpp"
#include "dcrsr/layers.hpp"

namespace dcrsr {

struct LossWeights {
  double w_pixel = 0.01;
  double w_gan = 0.005;
  double w_feat = 1.0;

  static LossWeights sam() { return {1.0, 0.0, 0.0}; }

  void validate() const {
    if (w_pixel < 0 || w_gan < 0 || w_feat < 0) throw ConfigError("loss weights must be non-negative");
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Mean absolute error over every element (batch, channel, pixel).
template <class T>
T pixel_loss(const Tensor<T>& sr, const Tensor<T>& hr) {
  sr.check_same(hr, "pixel_loss");
  T s = 0;
  for (std::size_t i = 0; i < sr.size(); ++i) s += std::abs(sr[i] - hr[i]);
  return s * (T(1) / static_cast<T>(sr.size()));
}

template <class T>
Var<T> pixel_loss(const Var<T>& sr, const Var<T>& hr) {
  sr.value().check_same(hr.value(), "pixel_loss");
  return ops::abs_diff_sum(sr, hr, T(1) / static_cast<T>(sr.value().size()));
}

struct GanLosses {
  double loss_d;  // -[log D(real) + log(1 - D(fake))]
  double loss_g;  // -log D(fake)
};

// D(.) = sigmoid(logit); evaluated through softplus so finite logits never
// produce infinities.
inline GanLosses gan_losses(double d_real_logit, double d_fake_logit) {
  return {ops::softplus(-d_real_logit) + ops::softplus(d_fake_logit), ops::softplus(-d_fake_logit)};
}

// Batch-averaged discriminator loss on logits of shape (N,1,1,1).
template <class T>
Var<T> discriminator_loss(const Var<T>& real_logits, const Var<T>& fake_logits) {
  return ops::add(ops::bce_with_logits(real_logits, T(1)), ops::bce_with_logits(fake_logits, T(0)));
}

// Non-saturating generator loss, -log D(G(x)).
template <class T>
Var<T> generator_gan_loss(const Var<T>& fake_logits) {
  return ops::bce_with_logits(fake_logits, T(1));
}

enum class FeatureProvenance { pretrained_vgg16, fixed_random };

// Frozen image -> feature-map network. Each spatial position of the output
// map is one feature vector.
template <class T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual Var<T> extract(const Var<T>& img) const = 0;
  virtual FeatureProvenance provenance() const = 0;
  virtual std::uint64_t param_hash() const = 0;
};

// Vgg-16 convolutions up to conv4_3, tapped before its activation. Inputs in
// [0,1] are normalized with the ImageNet statistics first.
template <class T>
class VggFeatureExtractor final : public FeatureExtractor<T> {
 public:
  static constexpr std::array<const char*, 10> kNames{"conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1",
                                                      "conv3_2", "conv3_3", "conv4_1", "conv4_2", "conv4_3"};

  static VggFeatureExtractor fixed_random(int base_width, std::uint64_t seed) {
    VggFeatureExtractor fe(base_width, FeatureProvenance::fixed_random);
    std::mt19937_64 rng(seed);
    for (auto& c : fe.convs_) init_conv(c, std::sqrt(2.0), 1.0, rng);
    return fe;
  }

  // Tensors named fe.<layer>.weight / fe.<layer>.bias.
  static VggFeatureExtractor from_checkpoint(const Checkpoint& ck) {
    const NamedTensor* first = ck.find("fe.conv1_1.weight");
    if (!first) throw CheckpointError("feature-extractor file lacks fe.conv1_1.weight");
    VggFeatureExtractor fe(first->tensor.dim(0), FeatureProvenance::pretrained_vgg16);
    fe.visit([&](const std::string& name, Parameter<T>& p) {
      const NamedTensor* t = ck.find(name);
      if (!t) throw CheckpointError("feature-extractor file lacks " + name);
      if (t->tensor.shape() != p.value.shape()) throw CheckpointError("feature-extractor tensor " + name + " has wrong shape");
      p.value = t->tensor.template cast<T>();
    });
    return fe;
  }

  // Pretrained weights when `path` is non-empty and loads, otherwise the
  // seeded random fallback (with a notice on stderr).
  static std::shared_ptr<FeatureExtractor<T>> make(const std::string& path, int base_width, std::uint64_t seed) {
    if (!path.empty()) {
      return std::make_shared<VggFeatureExtractor>(from_checkpoint(Checkpoint::load(path)));
    }
    std::cerr << "note: no feature-extractor weights given; using fixed_random Vgg-16 features (seed " << seed << ")\n";
    return std::make_shared<VggFeatureExtractor>(fixed_random(base_width, seed));
  }

  Var<T> extract(const Var<T>& img) const override {
    if (img.shape().size() != 4 || img.dim(1) != 3) throw ShapeError("feature extractor expects RGB input");
    Var<T> y = normalize(img);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      y = ops::conv2d(y, frozen(convs_[i].weight), frozen(convs_[i].bias), 1, 1);
      if (i + 1 == convs_.size()) break;
      y = ops::relu(y);
      if (i == 1 || i == 3 || i == 6) y = ops::max_pool2(y);
    }
    return y;
  }

  FeatureProvenance provenance() const override { return provenance_; }

  std::uint64_t param_hash() const override {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& c : convs_) {
      for (const auto* p : {&c.weight.value, &c.bias.value}) {
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(p->data()), p->size() * sizeof(T)), h);
      }
    }
    return h;
  }

  template <class F>
  void visit(F&& f) {
    for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].visit(std::string("fe.") + kNames[i], f);
  }

 private:
  VggFeatureExtractor(int base, FeatureProvenance prov) : provenance_(prov) {
    constexpr std::array<int, 10> mult{1, 1, 2, 2, 4, 4, 4, 8, 8, 8};
    int in = 3;
    for (int m : mult) {
      convs_.push_back(ConvParams<T>::conv(base * m, in, 3));
      convs_.back().weight.trainable = false;
      convs_.back().bias.trainable = false;
      in = base * m;
    }
  }

  static Var<T> normalize(const Var<T>& img) {
    static constexpr std::array<double, 3> mean{0.485, 0.456, 0.406};
    static constexpr std::array<double, 3> stdev{0.229, 0.224, 0.225};
    Tensor<T> w({3, 3, 1, 1});
    Tensor<T> b({3});
    for (int c = 0; c < 3; ++c) {
      w.at(c, c, 0, 0) = static_cast<T>(1.0 / stdev[c]);
      b[c] = static_cast<T>(-mean[c] / stdev[c]);
    }
    return ops::conv2d(img, constant(std::move(w)), constant(std::move(b)), 1, 0);
  }

  std::vector<ConvParams<T>> convs_;
  FeatureProvenance provenance_;
};

// (1/M) sum_i ||f(sr)_i - f(hr)_i||_1 over the M spatial feature vectors of the batch.
template <class T>
Var<T> perceptual_loss(const Var<T>& sr, const Var<T>& hr, const FeatureExtractor<T>& fe) {
  sr.value().check_same(hr.value(), "perceptual_loss");
  const Var<T> fs = fe.extract(sr);
  const Var<T> fh = detach(fe.extract(hr));
  const std::size_t m = static_cast<std::size_t>(fs.dim(0)) * fs.dim(2) * fs.dim(3);
  return ops::abs_diff_sum(fs, fh, T(1) / static_cast<T>(m));
}

template <class T>
T perceptual_loss(const Tensor<T>& sr, const Tensor<T>& hr, const FeatureExtractor<T>& fe) {
  NoGradGuard guard;
  return perceptual_loss(constant(sr), constant(hr), fe).value()[0];
}

// One VAM generator objective. Components are kept for logging.
template <class T>
struct LossBundle {
  Var<T> total;
  double pixel = 0;
  double gan = 0;
  double feat = 0;
  double total_value() const { return total.value()[0]; }
};

// `fake_logits` may be empty when w_gan == 0; `fe` may be null when w_feat == 0.
template <class T>
LossBundle<T> combined_vam_loss(const Var<T>& sr, const Var<T>& hr, const Var<T>& fake_logits,
                                const std::type_identity_t<FeatureExtractor<T>>* fe, const LossWeights& w) {
  w.validate();
  LossBundle<T> b;
  std::vector<Var<T>> terms;
  std::vector<T> weights;
  const Var<T> lp = pixel_loss(sr, hr);
  b.pixel = lp.value()[0];
  terms.push_back(lp);
  weights.push_back(static_cast<T>(w.w_pixel));
  if (fake_logits) {
    const Var<T> lg = generator_gan_loss(fake_logits);
    b.gan = lg.value()[0];
    terms.push_back(lg);
    weights.push_back(static_cast<T>(w.w_gan));
  } else if (w.w_gan != 0) {
    throw ConfigError("adversarial weight is non-zero but no discriminator logits were given");
  }
  if (fe) {
    const Var<T> lf = perceptual_loss(sr, hr, *fe);
    b.feat = lf.value()[0];
    terms.push_back(lf);
    weights.push_back(static_cast<T>(w.w_feat));
  } else if (w.w_feat != 0) {
    throw ConfigError("perceptual weight is non-zero but no feature extractor was given");
  }
  b.total = ops::weighted_sum(terms, weights);
  return b;
}

}  // namespace dcrsr
