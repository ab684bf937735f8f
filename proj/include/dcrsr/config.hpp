// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcrsr/discriminator.hpp"
#include "dcrsr/losses.hpp"
#include "dcrsr/model.hpp"
#include "dcrsr/schedule.hpp"

namespace dcrsr {

enum class Phase { SAM, VAM };

inline const char* to_string(Phase p) { return p == Phase::SAM ? "SAM" : "VAM"; }

// Environment variable naming the default checkpoint directory.
inline constexpr const char* kCheckpointDirEnv = "DCRSR_CHECKPOINT_DIR";

struct PatchStage {
  std::int64_t start_iter = 0;
  int hr_patch = 128;
  friend bool operator==(const PatchStage&, const PatchStage&) = default;
};

struct TrainConfig {
  Phase phase = Phase::SAM;
  ModelConfig model;
  DiscriminatorConfig disc;
  LossWeights loss = LossWeights::sam();
  std::string fe_weights;  // empty: fixed_random extractor
  int fe_width = 64;
  std::uint64_t fe_seed = 1234;

  std::string data_root;
  bool augment = true;

  std::int64_t total_iters = 800000;
  int batch_size = 16;
  std::vector<PatchStage> hr_patch_schedule{{0, 128}, {400000, 160}};
  ScheduleSpec schedule;  // kind, SGDR cycle structure, step decay, warm-up
  double lr_g = 3e-4;
  double lr_d = 1e-4;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 10000;
  std::string out_dir;

  static TrainConfig sam_defaults() { return TrainConfig{}; }

  static TrainConfig vam_defaults() {
    TrainConfig c;
    c.phase = Phase::VAM;
    c.loss = LossWeights{};
    c.total_iters = 80000;
    c.hr_patch_schedule = {{0, 160}, {40000, 128}};
    c.schedule.kind = ScheduleKind::step;
    c.schedule.decay_ratio = 0.5;
    c.schedule.decay_every = 5000;
    c.lr_g = 1e-3;
    c.lr_d = 1e-4;
    return c;
  }

  int hr_patch_at(std::int64_t iter) const {
    int p = hr_patch_schedule.front().hr_patch;
    for (const auto& s : hr_patch_schedule) if (iter >= s.start_iter) p = s.hr_patch;
    return p;
  }

  std::string resolved_out_dir() const {
    if (!out_dir.empty()) return out_dir;
    if (const char* env = std::getenv(kCheckpointDirEnv); env && *env) return env;
    return "checkpoints";
  }

  void validate() const {
    model.validate();
    disc.validate();
    loss.validate();
    if (phase == Phase::SAM && !(loss == LossWeights::sam())) throw ConfigError("SAM phase trains on pixel loss only (weights 1,0,0)");
    if (total_iters < 0) throw ConfigError("total_iters must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (hr_patch_schedule.empty() || hr_patch_schedule.front().start_iter != 0) {
      throw ConfigError("hr_patch_schedule must start at iteration 0");
    }
    for (std::size_t i = 0; i < hr_patch_schedule.size(); ++i) {
      if (i && hr_patch_schedule[i].start_iter <= hr_patch_schedule[i - 1].start_iter) {
        throw ConfigError("hr_patch_schedule must be sorted by start iteration");
      }
      if (hr_patch_schedule[i].hr_patch < 1 || hr_patch_schedule[i].hr_patch % model.generator.scale) {
        throw ConfigError("HR patch sizes must be positive multiples of the scale");
      }
    }
    if (!(lr_g > 0) || !(lr_d > 0)) throw ConfigError("learning rates must be > 0");
    if (schedule.cycle0 < 1 || schedule.t_mult < 1 || schedule.decay_every < 1) throw ConfigError("schedule periods must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (fe_width < 1) throw ConfigError("loss.fe_width must be >= 1");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class I>
I parse_int(const std::string& s) {
  I v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

inline double parse_double(const std::string& s) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected a boolean, got '" + s + "'");
}

struct Field {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define DCRSR_FIELD(KEY, EXPR, PARSE, FORMAT)                                            \
  Field {                                                                                \
    KEY, [](TrainConfig& c, const std::string& v) { EXPR = PARSE(v); },                  \
        [](const TrainConfig& c) -> std::string { return FORMAT(EXPR); }                 \
  }

inline std::string fmt_int(std::int64_t v) { return std::to_string(v); }
inline std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt_bool(bool v) { return v ? "true" : "false"; }
inline std::string fmt_str(const std::string& v) { return v; }
inline std::string parse_str(const std::string& v) { return v; }

inline Phase parse_phase(const std::string& s) {
  if (s == "SAM") return Phase::SAM;
  if (s == "VAM") return Phase::VAM;
  throw ConfigError("phase must be SAM or VAM, got '" + s + "'");
}
inline std::string fmt_phase(Phase p) { return to_string(p); }

inline std::optional<std::pair<int, int>> parse_shortcut(const std::string& s) {
  if (s == "none") return std::nullopt;
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ConfigError("shortcut must be 'i,j' or 'none', got '" + s + "'");
  return std::pair{parse_int<int>(trim(s.substr(0, comma))), parse_int<int>(trim(s.substr(comma + 1)))};
}
inline std::string fmt_shortcut(const std::optional<std::pair<int, int>>& s) {
  return s ? std::to_string(s->first) + "," + std::to_string(s->second) : std::string("none");
}

inline std::vector<PatchStage> parse_patches(const std::string& s) {
  std::vector<PatchStage> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("patch schedule entries are start:size, got '" + item + "'");
    out.push_back({parse_int<std::int64_t>(trim(item.substr(0, colon))), parse_int<int>(trim(item.substr(colon + 1)))});
  }
  if (out.empty()) throw ConfigError("empty patch schedule");
  return out;
}
inline std::string fmt_patches(const std::vector<PatchStage>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i].start_iter) + ":" + std::to_string(v[i].hr_patch);
  return out;
}

inline std::string fmt_kind(ScheduleKind k) { return to_string(k); }
inline std::string fmt_fusion(FusionMode m) { return to_string(m); }
inline std::uint64_t parse_u64(const std::string& s) { return parse_int<std::uint64_t>(s); }
inline std::int64_t parse_i64(const std::string& s) { return parse_int<std::int64_t>(s); }
inline int parse_i32(const std::string& s) { return parse_int<int>(s); }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      DCRSR_FIELD("phase", c.phase, parse_phase, fmt_phase),
      DCRSR_FIELD("data.root", c.data_root, parse_str, fmt_str),
      DCRSR_FIELD("data.augment", c.augment, parse_bool, fmt_bool),
      DCRSR_FIELD("model.n_c", c.model.generator.n_c, parse_i32, fmt_int),
      DCRSR_FIELD("model.n_g", c.model.generator.n_g, parse_i32, fmt_int),
      DCRSR_FIELD("model.num_blocks", c.model.generator.num_blocks, parse_i32, fmt_int),
      Field{"model.scale",
            [](TrainConfig& c, const std::string& v) { c.model.generator.scale = c.model.drm.scale = parse_i32(v); },
            [](const TrainConfig& c) { return fmt_int(c.model.generator.scale); }},
      DCRSR_FIELD("model.inter_block_shortcut", c.model.generator.inter_block_shortcut, parse_shortcut, fmt_shortcut),
      DCRSR_FIELD("model.fusion_mode", c.model.drm.fusion_mode, fusion_mode_from_string, fmt_fusion),
      DCRSR_FIELD("disc.width", c.disc.base_width, parse_i32, fmt_int),
      DCRSR_FIELD("loss.w_pixel", c.loss.w_pixel, parse_double, fmt_double),
      DCRSR_FIELD("loss.w_gan", c.loss.w_gan, parse_double, fmt_double),
      DCRSR_FIELD("loss.w_feat", c.loss.w_feat, parse_double, fmt_double),
      DCRSR_FIELD("loss.fe_weights", c.fe_weights, parse_str, fmt_str),
      DCRSR_FIELD("loss.fe_width", c.fe_width, parse_i32, fmt_int),
      DCRSR_FIELD("loss.fe_seed", c.fe_seed, parse_u64, fmt_u64),
      DCRSR_FIELD("train.total_iters", c.total_iters, parse_i64, fmt_int),
      DCRSR_FIELD("train.batch_size", c.batch_size, parse_i32, fmt_int),
      DCRSR_FIELD("train.hr_patch_schedule", c.hr_patch_schedule, parse_patches, fmt_patches),
      DCRSR_FIELD("train.lr_schedule", c.schedule.kind, schedule_kind_from_string, fmt_kind),
      DCRSR_FIELD("train.lr_g", c.lr_g, parse_double, fmt_double),
      DCRSR_FIELD("train.lr_d", c.lr_d, parse_double, fmt_double),
      DCRSR_FIELD("train.eta_min", c.schedule.eta_min, parse_double, fmt_double),
      DCRSR_FIELD("train.sgdr_cycle0", c.schedule.cycle0, parse_i64, fmt_int),
      DCRSR_FIELD("train.sgdr_t_mult", c.schedule.t_mult, parse_i64, fmt_int),
      DCRSR_FIELD("train.decay_ratio", c.schedule.decay_ratio, parse_double, fmt_double),
      DCRSR_FIELD("train.decay_every", c.schedule.decay_every, parse_i64, fmt_int),
      DCRSR_FIELD("train.warmup_iters", c.schedule.warmup.iters, parse_i64, fmt_int),
      DCRSR_FIELD("train.warmup_multiplier", c.schedule.warmup.multiplier, parse_double, fmt_double),
      DCRSR_FIELD("train.seed", c.seed, parse_u64, fmt_u64),
      DCRSR_FIELD("train.checkpoint_every", c.checkpoint_every, parse_i64, fmt_int),
      DCRSR_FIELD("train.out_dir", c.out_dir, parse_str, fmt_str),
  };
  return f;
}

#undef DCRSR_FIELD

}  // namespace detail

// Sets one `key` to `value`; unknown keys and malformed values throw.
inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const TrainConfig& cfg, const std::string& key) {
  for (const auto& f : detail::fields()) if (f.key == key) return f.get(cfg);
  throw ConfigError("unknown config key '" + key + "'");
}

// Applies `key = value` lines on top of `base`. Blank lines and `#` comments
// are ignored. Errors carry the 1-based line number.
inline TrainConfig parse_config(std::istream& in, TrainConfig base, const std::string& origin = "<config>") {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    try {
      if (eq == std::string::npos) throw ConfigError("expected 'key = value'");
      const std::string key = detail::trim(body.substr(0, eq));
      if (key.empty()) throw ConfigError("empty key");
      set_config_value(base, key, detail::trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

// Reads a config file. `phase` in the file selects the defaults it is layered
// on, so a VAM file only needs to state what differs from the VAM defaults.
inline TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  TrainConfig base = TrainConfig::sam_defaults();
  {
    std::istringstream probe(text);
    std::string line;
    while (std::getline(probe, line)) {
      const std::string body = detail::trim(line.substr(0, line.find('#')));
      const auto eq = body.find('=');
      if (eq != std::string::npos && detail::trim(body.substr(0, eq)) == "phase" &&
          detail::trim(body.substr(eq + 1)) == "VAM") {
        base = TrainConfig::vam_defaults();
      }
    }
  }
  std::istringstream in(text);
  return parse_config(in, base, path);
}

// Every key, one `key = value` line each; parse_config of the dump reproduces cfg.
inline std::string dump_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

// `key=value` override tokens, applied after the config file.
inline void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    set_config_value(cfg, detail::trim(o.substr(0, eq)), detail::trim(o.substr(eq + 1)));
  }
}

}  // namespace dcrsr
