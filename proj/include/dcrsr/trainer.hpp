// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "dcrsr/checkpoint.hpp"
#include "dcrsr/config.hpp"
#include "dcrsr/data.hpp"
#include "dcrsr/discriminator.hpp"
#include "dcrsr/losses.hpp"
#include "dcrsr/model.hpp"
#include "dcrsr/optim.hpp"

namespace dcrsr {

struct TrainState {
  Phase phase = Phase::SAM;
  std::int64_t iter = 0;
  std::uint64_t seed = 0;
  SRModel<float> gen;
  std::optional<DiscriminatorParams<float>> disc;
  AdamState opt_g;
  AdamState opt_d;
  double best_loss = std::numeric_limits<double>::infinity();
};

// Batch-sampling RNG for one iteration, a pure function of (seed, iter), so a
// resumed run draws the same patches as an uninterrupted one.
inline std::mt19937_64 iteration_rng(std::uint64_t seed, std::int64_t iter) {
  const auto it = static_cast<std::uint64_t>(iter);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(it), static_cast<std::uint32_t>(it >> 32), 0x5eedU};
  return std::mt19937_64(seq);
}

template <class Tree>
bool params_finite(const Tree& tree) {
  bool ok = true;
  tree.visit([&](const std::string&, const Parameter<float>& p) { ok = ok && p.value.all_finite(); });
  return ok;
}

template <class Tree>
void set_trainable(Tree& tree, bool on) {
  tree.visit([&](const std::string&, Parameter<float>& p) { p.trainable = on; });
}

template <class Tree>
void zero_grads(Tree& tree) {
  tree.visit([](const std::string&, Parameter<float>& p) { p.zero_grad(); });
}

// Adapts a discriminator to the visit(F) interface expected by adam_step.
struct DiscTree {
  DiscriminatorParams<float>& d;
  template <class F>
  void visit(F&& f) { d.visit("disc", f); }
  template <class F>
  void visit(F&& f) const { std::as_const(d).visit("disc", f); }
};

// One Adam step on the pixel loss. Returns the loss before the update.
inline double sam_step(SRModel<float>& gen, AdamState& opt, const Batch& b, double lr) {
  zero_grads(gen);
  const Var<float> sr = gen.forward(input_leaf(b.lr, false));
  const Var<float> loss = pixel_loss(sr, constant(b.hr));
  backward(loss);
  adam_step(gen, opt, lr);
  return loss.value()[0];
}

struct VamStepResult {
  double loss_d = 0;
  double total = 0;
  double pixel = 0;
  double gan = 0;
  double feat = 0;
};

// One discriminator update on (real HR, detached G(LR)), then one generator
// update on the weighted pixel + adversarial + perceptual objective.
inline VamStepResult vam_step(SRModel<float>& gen, DiscriminatorParams<float>& disc, AdamState& opt_g,
                              AdamState& opt_d, const Batch& b, double lr_g, double lr_d, const LossWeights& w,
                              const FeatureExtractor<float>* fe) {
  VamStepResult r;
  DiscTree dt{disc};
  {
    zero_grads(dt);
    set_trainable(dt, true);
    const Tensor<float> fake = gen.infer(b.lr);
    const Var<float> ld = discriminator_loss(discriminator_forward(constant(b.hr), disc),
                                             discriminator_forward(constant(fake), disc));
    backward(ld);
    adam_step(dt, opt_d, lr_d);
    r.loss_d = ld.value()[0];
  }
  {
    zero_grads(gen);
    set_trainable(dt, false);
    const Var<float> sr = gen.forward(input_leaf(b.lr, false));
    const Var<float> logits = w.w_gan != 0 ? discriminator_forward(sr, disc) : Var<float>();
    const LossBundle<float> lb = combined_vam_loss(sr, constant(b.hr), logits, w.w_feat != 0 ? fe : nullptr, w);
    backward(lb.total);
    adam_step(gen, opt_g, lr_g);
    set_trainable(dt, true);
    r.total = lb.total_value();
    r.pixel = lb.pixel;
    r.gan = lb.gan;
    r.feat = lb.feat;
  }
  return r;
}

struct ProgressRecord {
  std::int64_t iter = 0;  // iteration that was just completed (1-based)
  double lr = 0;
  double total = 0;
  double pixel = 0;
  double gan = 0;
  double feat = 0;
  double loss_d = 0;
};

struct TrainHooks {
  std::function<void(const ProgressRecord&)> progress;
  std::function<void(const TrainState&)> checkpoint;  // called every checkpoint_every iters
  const FeatureExtractor<float>* fe = nullptr;
  std::string last_checkpoint;  // reported when a step goes non-finite
};

inline TrainState init_sam_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.phase = Phase::SAM;
  s.seed = cfg.seed;
  s.gen = SRModel<float>::init(cfg.model, cfg.seed);
  return s;
}

// Generator from the SAM checkpoint, fresh discriminator and optimizers.
inline TrainState init_vam_state(const TrainConfig& cfg, const Checkpoint& sam) {
  cfg.validate();
  if (sam.config_hash != cfg.model.hash()) {
    throw CheckpointError("SAM checkpoint topology does not match the config (" + cfg.model.describe() + ")");
  }
  TrainState s;
  s.phase = Phase::VAM;
  s.seed = cfg.seed;
  s.gen = SRModel<float>::zeros(cfg.model);
  s.gen.load_tensors(sam);
  std::mt19937_64 rng(cfg.seed ^ 0xd15cULL);
  s.disc = init_discriminator<float>(cfg.disc, rng);
  return s;
}

// Runs iterations until state.iter == until.
inline void train_until(TrainState& s, const TrainConfig& cfg, const Dataset& data, std::int64_t until,
                        TrainHooks& hooks) {
  if (data.size() == 0) throw EmptyDataset("dataset is empty");
  if (s.phase == Phase::VAM && !s.disc) throw ConfigError("VAM state has no discriminator");
  while (s.iter < until) {
    std::mt19937_64 rng = iteration_rng(s.seed, s.iter);
    const Batch batch = sample_batch(data, cfg.batch_size, cfg.hr_patch_at(s.iter), rng, cfg.augment);
    ProgressRecord rec;
    rec.lr = cfg.schedule.at(s.iter, cfg.lr_g);
    bool finite = true;
    if (s.phase == Phase::SAM) {
      rec.total = rec.pixel = sam_step(s.gen, s.opt_g, batch, rec.lr);
    } else {
      const double lr_d = cfg.schedule.at(s.iter, cfg.lr_d);
      const VamStepResult r = vam_step(s.gen, *s.disc, s.opt_g, s.opt_d, batch, rec.lr, lr_d, cfg.loss, hooks.fe);
      rec.total = r.total;
      rec.pixel = r.pixel;
      rec.gan = r.gan;
      rec.feat = r.feat;
      rec.loss_d = r.loss_d;
      finite = std::isfinite(r.loss_d) && params_finite(DiscTree{*s.disc});
    }
    finite = finite && std::isfinite(rec.total) && params_finite(s.gen);
    if (!finite) {
      throw TrainingAborted("non-finite loss or parameters at iteration " + std::to_string(s.iter + 1),
                            hooks.last_checkpoint);
    }
    ++s.iter;
    s.best_loss = std::min(s.best_loss, rec.total);
    rec.iter = s.iter;
    if (hooks.progress) hooks.progress(rec);
    if (hooks.checkpoint && s.iter % cfg.checkpoint_every == 0) hooks.checkpoint(s);
  }
}

inline Checkpoint make_checkpoint(const TrainState& s, const TrainConfig& cfg) {
  Checkpoint ck;
  ck.config_hash = cfg.model.hash();
  ck.tensors = s.gen.to_tensors();
  s.opt_g.append_tensors("opt_g", ck.tensors);
  if (s.disc) {
    s.disc->visit("disc", [&](const std::string& name, const Parameter<float>& p) { ck.tensors.push_back({name, p.value}); });
    s.opt_d.append_tensors("opt_d", ck.tensors);
  }
  ck.meta["phase"] = to_string(s.phase);
  ck.meta["iter"] = std::to_string(s.iter);
  ck.meta["seed"] = std::to_string(s.seed);
  ck.meta["opt_g.step"] = std::to_string(s.opt_g.step);
  ck.meta["opt_d.step"] = std::to_string(s.opt_d.step);
  ck.meta["best_loss"] = detail::fmt_double(s.best_loss);
  ck.meta["model"] = cfg.model.describe();
  for (const auto& f : detail::fields()) ck.meta["config." + f.key] = f.get(cfg);
  return ck;
}

// Model topology recorded in a checkpoint's sidecar.
inline ModelConfig model_config_from_checkpoint(const Checkpoint& ck) {
  TrainConfig c;
  bool any = false;
  for (const auto& [k, v] : ck.meta) {
    if (k.rfind("config.model.", 0) == 0) {
      set_config_value(c, k.substr(7), v);
      any = true;
    }
  }
  if (!any) throw CheckpointError("checkpoint metadata does not describe the model");
  if (c.model.hash() != ck.config_hash) throw CheckpointError("checkpoint metadata disagrees with its config hash");
  return c.model;
}

inline SRModel<float> load_model(const Checkpoint& ck) {
  SRModel<float> m = SRModel<float>::zeros(model_config_from_checkpoint(ck));
  m.load_tensors(ck);
  return m;
}

inline TrainState restore_state(const Checkpoint& ck, const TrainConfig& cfg) {
  if (ck.config_hash != cfg.model.hash()) {
    throw CheckpointError("checkpoint topology does not match the config (" + cfg.model.describe() + ")");
  }
  TrainState s;
  s.phase = detail::parse_phase(ck.meta_at("phase"));
  s.iter = detail::parse_i64(ck.meta_at("iter"));
  s.seed = detail::parse_u64(ck.meta_at("seed"));
  s.best_loss = detail::parse_double(ck.meta_at("best_loss"));
  s.gen = SRModel<float>::zeros(cfg.model);
  s.gen.load_tensors(ck);
  s.opt_g.load_tensors("opt_g", ck);
  s.opt_g.step = detail::parse_i64(ck.meta_at("opt_g.step"));
  if (s.phase == Phase::VAM) {
    DiscriminatorParams<float> d(cfg.disc);
    d.visit("disc", [&](const std::string& name, Parameter<float>& p) {
      const NamedTensor* t = ck.find(name);
      if (!t || t->tensor.shape() != p.value.shape()) throw CheckpointError("discriminator tensor " + name + " missing or mis-shaped");
      p.value = t->tensor;
      p.zero_grad();
    });
    s.disc = std::move(d);
    s.opt_d.load_tensors("opt_d", ck);
    s.opt_d.step = detail::parse_i64(ck.meta_at("opt_d.step"));
  }
  return s;
}

inline std::filesystem::path checkpoint_path(const std::string& dir, Phase phase, std::int64_t iter) {
  char name[64];
  std::snprintf(name, sizeof name, "%s_%08lld.ckpt", phase == Phase::SAM ? "sam" : "vam", static_cast<long long>(iter));
  return std::filesystem::path(dir) / name;
}

// Highest-iteration checkpoint of `phase` in `dir`, if any.
inline std::optional<std::filesystem::path> latest_checkpoint(const std::string& dir, Phase phase) {
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  const std::string prefix = phase == Phase::SAM ? "sam_" : "vam_";
  std::optional<std::filesystem::path> best;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (n.rfind(prefix, 0) == 0 && e.path().extension() == ".ckpt" && (!best || n > best->filename().string())) best = e.path();
  }
  return best;
}

struct RunOptions {
  bool resume = false;            // continue from the latest checkpoint in out_dir
  std::ostream* log = nullptr;    // progress lines
};

namespace detail {

inline void write_progress(std::ostream& os, const ProgressRecord& r, Phase phase) {
  os << r.iter << '\t' << fmt_double(r.lr) << '\t' << fmt_double(r.total) << '\t' << fmt_double(r.pixel);
  if (phase == Phase::VAM) os << '\t' << fmt_double(r.gan) << '\t' << fmt_double(r.feat) << '\t' << fmt_double(r.loss_d);
  os << '\n';
}

inline Checkpoint run_phase(TrainState s, const TrainConfig& cfg, const Dataset& data, const RunOptions& opt,
                            const FeatureExtractor<float>* fe) {
  const std::string dir = cfg.resolved_out_dir();
  std::filesystem::create_directories(dir);
  const auto log_path = std::filesystem::path(dir) / (cfg.phase == Phase::SAM ? "sam_progress.tsv" : "vam_progress.tsv");
  std::ofstream log(log_path, s.iter > 0 ? std::ios::app : std::ios::trunc);
  if (s.iter == 0) {
    log << (cfg.phase == Phase::SAM ? "#iter\tlr\tloss_total\tloss_pixel\n"
                                    : "#iter\tlr\tloss_total\tloss_pixel\tloss_gan\tloss_feat\tloss_d\n");
  }
  TrainHooks hooks;
  hooks.fe = fe;
  hooks.progress = [&](const ProgressRecord& r) {
    write_progress(log, r, cfg.phase);
    if (opt.log) write_progress(*opt.log, r, cfg.phase);
  };
  hooks.checkpoint = [&](const TrainState& st) {
    const auto p = checkpoint_path(dir, cfg.phase, st.iter);
    make_checkpoint(st, cfg).save(p);
    hooks.last_checkpoint = p.string();
  };
  if (auto prev = latest_checkpoint(dir, cfg.phase)) hooks.last_checkpoint = prev->string();
  train_until(s, cfg, data, cfg.total_iters, hooks);
  Checkpoint ck = make_checkpoint(s, cfg);
  if (s.iter == 0 || s.iter % cfg.checkpoint_every != 0) ck.save(checkpoint_path(dir, cfg.phase, s.iter));
  return ck;
}

}  // namespace detail

// Pixel-loss pre-training. Checkpoints go to cfg.resolved_out_dir().
inline Checkpoint train_sam(const TrainConfig& cfg, const DatasetManifest& manifest, const RunOptions& opt = {}) {
  if (cfg.phase != Phase::SAM) throw ConfigError("train_sam needs phase = SAM");
  const Dataset data = Dataset::load(manifest);
  TrainState s = init_sam_state(cfg);
  if (opt.resume) {
    if (auto p = latest_checkpoint(cfg.resolved_out_dir(), Phase::SAM)) s = restore_state(Checkpoint::load(*p), cfg);
  }
  return detail::run_phase(std::move(s), cfg, data, opt, nullptr);
}

// Adversarial fine-tuning starting from a SAM checkpoint.
inline Checkpoint train_vam(const TrainConfig& cfg, const DatasetManifest& manifest, const Checkpoint& sam_ckpt,
                            const RunOptions& opt = {}) {
  if (cfg.phase != Phase::VAM) throw ConfigError("train_vam needs phase = VAM");
  TrainState s = init_vam_state(cfg, sam_ckpt);
  if (opt.resume) {
    if (auto p = latest_checkpoint(cfg.resolved_out_dir(), Phase::VAM)) s = restore_state(Checkpoint::load(*p), cfg);
  }
  const Dataset data = Dataset::load(manifest);
  std::shared_ptr<FeatureExtractor<float>> fe;
  if (cfg.loss.w_feat != 0) fe = VggFeatureExtractor<float>::make(cfg.fe_weights, cfg.fe_width, cfg.fe_seed);
  return detail::run_phase(std::move(s), cfg, data, opt, fe.get());
}

}  // namespace dcrsr
