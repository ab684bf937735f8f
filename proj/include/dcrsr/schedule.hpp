// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "dcrsr/errors.hpp"

namespace dcrsr {

// Cosine annealing with warm restarts. The first cycle lasts cycle0 iterations
// and each restart multiplies the cycle length by t_mult.
inline double sgdr_lr(std::int64_t iter, double eta_max, double eta_min, std::int64_t cycle0, std::int64_t t_mult) {
  if (iter < 0) throw ConfigError("sgdr_lr: negative iteration");
  if (cycle0 < 1 || t_mult < 1) throw ConfigError("sgdr_lr: cycle0 and t_mult must be >= 1");
  std::int64_t t = iter;
  std::int64_t len = cycle0;
  while (t >= len) {
    t -= len;
    len *= t_mult;
  }
  if (t == 0) return eta_max;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(len);
  return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(phase));
}

inline double step_decay_lr(std::int64_t iter, double base, double ratio, std::int64_t every) {
  if (every < 1) throw ConfigError("step_decay_lr: period must be >= 1");
  return base * std::pow(ratio, static_cast<double>(iter / every));
}

struct WarmupSpec {
  std::int64_t iters = 0;
  double multiplier = 1.0;
  friend bool operator==(const WarmupSpec&, const WarmupSpec&) = default;
};

// Multiplier applied on top of the phase schedule; boundary is exclusive.
inline double warmup_lr(std::int64_t iter, const WarmupSpec& w) { return iter < w.iters ? w.multiplier : 1.0; }

enum class ScheduleKind { sgdr, step, constant };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::sgdr: return "sgdr";
    case ScheduleKind::step: return "step";
    default: return "constant";
  }
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "sgdr") return ScheduleKind::sgdr;
  if (s == "step") return ScheduleKind::step;
  if (s == "constant") return ScheduleKind::constant;
  throw ConfigError("unknown schedule '" + s + "' (expected sgdr, step or constant)");
}

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::sgdr;
  double eta_min = 1e-7;
  std::int64_t cycle0 = 100000;
  std::int64_t t_mult = 2;
  double decay_ratio = 0.5;
  std::int64_t decay_every = 5000;
  WarmupSpec warmup;

  double at(std::int64_t iter, double base) const {
    double lr = base;
    switch (kind) {
      case ScheduleKind::sgdr: lr = sgdr_lr(iter, base, eta_min, cycle0, t_mult); break;
      case ScheduleKind::step: lr = step_decay_lr(iter, base, decay_ratio, decay_every); break;
      case ScheduleKind::constant: break;
    }
    return lr * warmup_lr(iter, warmup);
  }
  friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

}  // namespace dcrsr
