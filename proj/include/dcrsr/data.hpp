// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dcrsr/image.hpp"

namespace dcrsr {

struct PairedSample {
  ImageTensor hr;
  ImageTensor lr;
  int scale = 4;

  void validate() const {
    if (hr.height != scale * lr.height || hr.width != scale * lr.width) {
      throw ShapeError("HR size must be scale x LR size");
    }
  }
};

enum class Degradation { bicubic_downscale, paired };

inline const char* to_string(Degradation d) { return d == Degradation::paired ? "paired" : "bicubic_downscale"; }

struct ManifestEntry {
  std::filesystem::path hr_path;
  std::optional<std::filesystem::path> lr_path;
  Degradation mode = Degradation::bicubic_downscale;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int scale = 4;
  std::vector<std::string> warnings;  // one record per skipped file

  // One `hr_path<TAB>lr_path|-<TAB>mode` line per entry.
  std::string dump() const {
    std::string out;
    for (const auto& e : entries) {
      out += e.hr_path.string() + '\t' + (e.lr_path ? e.lr_path->string() : std::string("-")) + '\t' +
             to_string(e.mode) + '\n';
    }
    return out;
  }
};

inline bool is_png(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

inline std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_png(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  return out;
}

// Scans root/HR (and optional root/LR with matching filenames).
inline DatasetManifest load_manifest(const std::filesystem::path& root, int scale) {
  if (scale < 1) throw InvalidSize("scale must be positive");
  DatasetManifest m;
  m.scale = scale;
  const auto hr_files = list_pngs(root / "HR");
  for (const auto& hr : hr_files) {
    ImageTensor img;
    try {
      img = read_png(hr);
    } catch (const ImageIoError& e) {
      m.warnings.push_back(hr.string() + ": " + e.what());
      continue;
    }
    if (img.height % scale != 0 || img.width % scale != 0) {
      m.warnings.push_back(hr.string() + ": dimensions " + std::to_string(img.width) + "x" +
                           std::to_string(img.height) + " not divisible by scale " + std::to_string(scale));
      continue;
    }
    ManifestEntry e;
    e.hr_path = hr;
    const auto lr = root / "LR" / hr.filename();
    if (std::filesystem::is_regular_file(lr)) {
      e.lr_path = lr;
      e.mode = Degradation::paired;
    }
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) throw EmptyDataset("no usable HR images under " + (root / "HR").string());
  return m;
}

// Deterministic flip / rotation applied identically to HR and LR.
struct Augmentation {
  bool hflip = false;
  int rot90 = 0;  // quarter turns, 0..3
};

inline ImageTensor augment(const ImageTensor& img, const Augmentation& a) {
  ImageTensor cur = img;
  if (a.hflip) {
    for (int c = 0; c < cur.channels; ++c)
      for (int y = 0; y < cur.height; ++y)
        for (int x = 0; x < cur.width / 2; ++x) std::swap(cur.at(c, y, x), cur.at(c, y, cur.width - 1 - x));
  }
  for (int r = 0; r < (a.rot90 % 4 + 4) % 4; ++r) {
    ImageTensor rot(cur.channels, cur.width, cur.height, cur.space);
    // counter-clockwise quarter turn
    for (int c = 0; c < cur.channels; ++c)
      for (int y = 0; y < cur.height; ++y)
        for (int x = 0; x < cur.width; ++x) rot.at(c, cur.width - 1 - x, y) = cur.at(c, y, x);
    cur = std::move(rot);
  }
  return cur;
}

struct PatchOffset {
  int lr_y = 0;
  int lr_x = 0;
};

// Aligned crop: HR hr_patch^2 at (scale*i, scale*j), LR (hr_patch/scale)^2 at (i, j).
inline PairedSample crop_pair(const PairedSample& s, int hr_patch, PatchOffset off) {
  const int lp = hr_patch / s.scale;
  PairedSample out;
  out.scale = s.scale;
  out.lr = s.lr.crop(off.lr_y, off.lr_x, lp, lp);
  out.hr = s.hr.crop(off.lr_y * s.scale, off.lr_x * s.scale, hr_patch, hr_patch);
  return out;
}

inline PairedSample sample_patch(const PairedSample& s, int hr_patch, std::mt19937_64& rng, bool with_augment = false) {
  if (hr_patch < 1 || hr_patch % s.scale != 0) throw InvalidSize("HR patch size must be a positive multiple of the scale");
  if (hr_patch > std::min(s.hr.height, s.hr.width)) {
    throw PatchTooLarge("patch " + std::to_string(hr_patch) + " exceeds image " + std::to_string(s.hr.width) + "x" +
                        std::to_string(s.hr.height));
  }
  s.validate();
  const int lp = hr_patch / s.scale;
  std::uniform_int_distribution<int> dy(0, s.lr.height - lp), dx(0, s.lr.width - lp);
  PatchOffset off;
  off.lr_y = dy(rng);
  off.lr_x = dx(rng);
  PairedSample out = crop_pair(s, hr_patch, off);
  if (with_augment) {
    Augmentation a;
    a.hflip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    a.rot90 = std::uniform_int_distribution<int>(0, 3)(rng);
    out.hr = augment(out.hr, a);
    out.lr = augment(out.lr, a);
  }
  return out;
}

// Decoded corpus; LR for unpaired entries is synthesized once at load time.
struct Dataset {
  std::vector<PairedSample> samples;
  std::vector<std::string> names;
  int scale = 4;

  std::size_t size() const { return samples.size(); }

  static Dataset load(const DatasetManifest& m) {
    Dataset d;
    d.scale = m.scale;
    for (const auto& e : m.entries) {
      PairedSample s;
      s.scale = m.scale;
      s.hr = read_png(e.hr_path);
      s.lr = e.lr_path ? read_png(*e.lr_path) : bicubic_resize(s.hr, s.hr.height / m.scale, s.hr.width / m.scale);
      s.validate();
      d.samples.push_back(std::move(s));
      d.names.push_back(e.hr_path.filename().string());
    }
    if (d.samples.empty()) throw EmptyDataset("dataset is empty");
    return d;
  }

  static Dataset from_hr_images(std::vector<ImageTensor> hr, int scale) {
    Dataset d;
    d.scale = scale;
    for (std::size_t i = 0; i < hr.size(); ++i) {
      if (hr[i].height % scale || hr[i].width % scale) throw InvalidSize("HR image not divisible by scale");
      PairedSample s;
      s.scale = scale;
      s.lr = bicubic_resize(hr[i], hr[i].height / scale, hr[i].width / scale);
      s.hr = std::move(hr[i]);
      d.samples.push_back(std::move(s));
      d.names.push_back("image" + std::to_string(i));
    }
    if (d.samples.empty()) throw EmptyDataset("dataset is empty");
    return d;
  }
};

struct Batch {
  Tensor<float> lr;
  Tensor<float> hr;
};

// Draws `batch_size` aligned patches from uniformly chosen images.
inline Batch sample_batch(const Dataset& d, int batch_size, int hr_patch, std::mt19937_64& rng, bool with_augment) {
  if (d.samples.empty()) throw EmptyDataset("dataset is empty");
  std::uniform_int_distribution<std::size_t> pick(0, d.samples.size() - 1);
  std::vector<PairedSample> patches;
  patches.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) patches.push_back(sample_patch(d.samples[pick(rng)], hr_patch, rng, with_augment));
  std::vector<const ImageTensor*> lr, hr;
  for (const auto& p : patches) {
    lr.push_back(&p.lr);
    hr.push_back(&p.hr);
  }
  return {to_batch<float>(lr), to_batch<float>(hr)};
}

// Procedural "cartoon" texture: a smooth two-colour gradient overlaid with
// stripes, flat rectangles and disks with hard edges.
inline ImageTensor synthetic_texture(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageTensor img(3, size, size, ColorSpace::rgb);
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = u(rng);
    c1[c] = u(rng);
  }
  const double gdir = u(rng) * 2.0 * M_PI;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double t = 0.5 + 0.5 * std::sin(gdir) * (y - size / 2.0) / size + 0.5 * std::cos(gdir) * (x - size / 2.0) / size;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(c0[c] * (1 - t) + c1[c] * t);
    }

  // stripe band
  {
    const double ang = u(rng) * M_PI;
    const double period = 6.0 + 10.0 * u(rng);
    double col[3];
    for (double& v : col) v = u(rng);
    const double ca = std::cos(ang), sa = std::sin(ang);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double p = x * ca + y * sa;
        if (std::fmod(p + 1000.0 * period, period) < period / 2 && (x * sa - y * ca) > 0)
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(col[c]);
      }
  }
  const int shapes = 3 + static_cast<int>(u(rng) * 4);
  for (int s = 0; s < shapes; ++s) {
    double col[3];
    for (double& v : col) v = u(rng);
    const double cy = u(rng) * size, cx = u(rng) * size;
    const double r = size * (0.08 + 0.2 * u(rng));
    const bool disk = u(rng) < 0.5;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        const bool inside = disk ? (dy * dy + dx * dx < r * r) : (std::abs(dy) < r && std::abs(dx) < 0.7 * r);
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(col[c]);
      }
  }
  for (float& v : img.data) v = quantize8(v);
  return img;
}

inline std::vector<ImageTensor> synthetic_corpus(int count, int size, std::uint64_t seed) {
  std::vector<ImageTensor> out;
  for (int i = 0; i < count; ++i) out.push_back(synthetic_texture(size, seed * 1000003ULL + static_cast<std::uint64_t>(i)));
  return out;
}

}  // namespace dcrsr
