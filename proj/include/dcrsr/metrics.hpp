// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcrsr/data.hpp"
#include "dcrsr/image.hpp"

namespace dcrsr {

// Returned for identical inputs instead of +inf.
inline constexpr double kIdenticalPsnrDb = 100.0;

inline double psnr(std::span<const float> a, std::span<const float> b, double peak) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("psnr: inputs differ in size");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  if (se == 0.0) return kIdenticalPsnrDb;
  return 10.0 * std::log10(peak * peak / (se / static_cast<double>(a.size())));
}

inline double psnr(const ImageTensor& a, const ImageTensor& b, double peak = 1.0) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width) throw ShapeError("psnr: shape mismatch");
  return psnr(a.data, b.data, peak);
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

// Single-scale SSIM on one channel: Gaussian-weighted local statistics at every
// valid (fully inside) window position, averaged.
inline double ssim(const ImageTensor& a, const ImageTensor& b, const SsimParams& prm = {}) {
  if (a.channels != 1 || b.channels != 1) throw ShapeError("ssim expects single-channel inputs (convert with to_luma)");
  if (a.height != b.height || a.width != b.width) throw ShapeError("ssim: shape mismatch");
  const int k = prm.window;
  if (a.height < k || a.width < k) throw TooSmall("ssim needs at least " + std::to_string(k) + "x" + std::to_string(k));

  std::vector<double> g(static_cast<std::size_t>(k));
  double gs = 0.0;
  for (int i = 0; i < k; ++i) {
    const double d = i - (k - 1) / 2.0;
    g[i] = std::exp(-d * d / (2.0 * prm.sigma * prm.sigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;

  const double c1 = (prm.k1 * prm.peak) * (prm.k1 * prm.peak);
  const double c2 = (prm.k2 * prm.peak) * (prm.k2 * prm.peak);
  const int oh = a.height - k + 1, ow = a.width - k + 1;
  double total = 0.0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
          const double w = g[i] * g[j];
          const double va = a.at(0, y + i, x + j), vb = b.at(0, y + i, x + j);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      }
      const double var_a = saa - ma * ma;
      const double var_b = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
  }
  return total / (static_cast<double>(oh) * ow);
}

// BT.601 studio-range luma, Y = (16 + 65.481 R + 128.553 G + 24.966 B) / 255.
inline ImageTensor to_luma(const ImageTensor& rgb) {
  if (rgb.channels != 3) throw ShapeError("to_luma expects an RGB image");
  ImageTensor y(1, rgb.height, rgb.width, ColorSpace::y);
  for (int i = 0; i < rgb.height; ++i)
    for (int j = 0; j < rgb.width; ++j) {
      const double v = 16.0 + 65.481 * rgb.at(0, i, j) + 128.553 * rgb.at(1, i, j) + 24.966 * rgb.at(2, i, j);
      y.at(0, i, j) = static_cast<float>(v / 255.0);
    }
  return y;
}

struct EvalConfig {
  int shave = 4;
  bool on_luma = true;
};

struct ImageMetric {
  std::string name;
  double psnr_db = 0;
  double ssim = 0;
};

struct MetricReport {
  EvalConfig config;
  std::vector<ImageMetric> images;
  std::vector<std::string> problems;  // missing counterparts and per-image errors
  double mean_psnr = 0;
  double mean_ssim = 0;

  bool ok() const { return problems.empty(); }

  std::string tsv() const {
    std::string out;
    char buf[256];
    for (const auto& m : images) {
      std::snprintf(buf, sizeof buf, "%s\t%.4f\t%.6f\n", m.name.c_str(), m.psnr_db, m.ssim);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "mean\t%.4f\t%.6f\n", mean_psnr, mean_ssim);
    return out + buf;
  }

  std::string table() const {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-32s %10s %10s\n", "image", "PSNR(dB)", "SSIM");
    out += buf;
    for (const auto& m : images) {
      std::snprintf(buf, sizeof buf, "%-32s %10.4f %10.6f\n", m.name.c_str(), m.psnr_db, m.ssim);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "%-32s %10.4f %10.6f\n", "mean", mean_psnr, mean_ssim);
    out += buf;
    std::snprintf(buf, sizeof buf, "(%s, shave %d, %zu images)\n", config.on_luma ? "luma" : "rgb", config.shave,
                  images.size());
    return out + buf;
  }
};

// Luma conversion (optional), border shave, clamp to [0,1], 8-bit
// quantization, then PSNR (peak 1) and SSIM. SSIM on RGB averages channels.
inline ImageMetric evaluate_pair(const std::string& name, const ImageTensor& sr, const ImageTensor& hr,
                                 const EvalConfig& cfg) {
  if (sr.channels != hr.channels || sr.height != hr.height || sr.width != hr.width) {
    throw ShapeError("SR and HR sizes differ");
  }
  auto prep = [&](const ImageTensor& img) {
    ImageTensor x = cfg.on_luma && img.channels == 3 ? to_luma(img) : img;
    const int h = x.height - 2 * cfg.shave, w = x.width - 2 * cfg.shave;
    if (h < 1 || w < 1) throw TooSmall("shave " + std::to_string(cfg.shave) + " leaves no pixels");
    x = x.crop(cfg.shave, cfg.shave, h, w);
    for (float& v : x.data) v = quantize8(v);
    return x;
  };
  const ImageTensor a = prep(sr);
  const ImageTensor b = prep(hr);
  ImageMetric m;
  m.name = name;
  m.psnr_db = psnr(a, b, 1.0);
  m.ssim = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    ImageTensor pa(1, a.height, a.width, ColorSpace::y), pb(1, b.height, b.width, ColorSpace::y);
    std::copy_n(a.data.begin() + c * a.plane(), a.plane(), pa.data.begin());
    std::copy_n(b.data.begin() + c * b.plane(), b.plane(), pb.data.begin());
    m.ssim += ssim(pa, pb);
  }
  m.ssim /= a.channels;
  return m;
}

// Compares every PNG in sr_dir with the same-named PNG in hr_dir. Missing
// counterparts and failing images are reported and excluded; means are taken
// in sorted filename order.
inline MetricReport evaluate(const std::filesystem::path& sr_dir, const std::filesystem::path& hr_dir,
                             const EvalConfig& cfg) {
  MetricReport r;
  r.config = cfg;
  std::map<std::string, std::filesystem::path> sr, hr;
  for (const auto& p : list_pngs(sr_dir)) sr[p.filename().string()] = p;
  for (const auto& p : list_pngs(hr_dir)) hr[p.filename().string()] = p;
  for (const auto& [name, _] : sr) if (!hr.count(name)) r.problems.push_back(name + ": missing in " + hr_dir.string());
  for (const auto& [name, _] : hr) if (!sr.count(name)) r.problems.push_back(name + ": missing in " + sr_dir.string());
  for (const auto& [name, sp] : sr) {
    auto it = hr.find(name);
    if (it == hr.end()) continue;
    try {
      r.images.push_back(evaluate_pair(name, read_png(sp), read_png(it->second), cfg));
    } catch (const Error& e) {
      r.problems.push_back(name + ": " + e.what());
    }
  }
  if (r.images.empty() && r.problems.empty()) r.problems.push_back("no images to evaluate");
  for (const auto& m : r.images) {
    r.mean_psnr += m.psnr_db;
    r.mean_ssim += m.ssim;
  }
  if (!r.images.empty()) {
    r.mean_psnr /= static_cast<double>(r.images.size());
    r.mean_ssim /= static_cast<double>(r.images.size());
  }
  return r;
}

}  // namespace dcrsr
