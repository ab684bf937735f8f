// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dcrsr/tensor.hpp"

// Binary tensor container:
//   "DCRSRCKP" | u32 version | u64 config hash | u32 count
//   count x { u32 name_len | name | u8 dtype (0 = f32) | u32 rank | rank x u32 dim }
//   payloads, raw little-endian f32, in table order
// A sidecar "<path>.meta" holds `key = value` lines (iteration, seed, metrics,
// effective config).
namespace dcrsr {

inline constexpr std::array<char, 8> kCheckpointMagic{'D', 'C', 'R', 'S', 'R', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t hash_tensors(const std::vector<NamedTensor>& ts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : ts) {
    h = fnv1a(t.name, h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(t.tensor.data()), t.tensor.size() * sizeof(float)), h);
  }
  return h;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& buf, std::string path) : buf_(buf), path_(std::move(path)) {}
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw CheckpointError("truncated checkpoint: " + path_);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::vector<NamedTensor> tensors;
  std::map<std::string, std::string> meta;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors) if (t.name == name) return &t;
    return nullptr;
  }

  const std::string& meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw CheckpointError("checkpoint metadata lacks '" + key + "'");
    return it->second;
  }

  std::string encode() const {
    std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u64(out, config_hash);
    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
      detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
      out += t.name;
      out.push_back(0);  // f32
      detail::put_u32(out, static_cast<std::uint32_t>(t.tensor.rank()));
      for (int d : t.tensor.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (const auto& t : tensors) {
      for (float v : t.tensor.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
  }

  static Checkpoint decode(const std::string& buf, const std::string& origin = "<memory>") {
    detail::Reader r(buf, origin);
    if (r.bytes(8) != std::string(kCheckpointMagic.begin(), kCheckpointMagic.end())) {
      throw CheckpointError("not a checkpoint (bad magic): " + origin);
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.config_hash = r.u64();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedTensor t;
      t.name = r.bytes(r.u32());
      if (r.u8() != 0) throw CheckpointError("unsupported dtype for tensor " + t.name);
      Shape shape(r.u32());
      for (int& d : shape) d = static_cast<int>(r.u32());
      t.tensor = Tensor<float>(shape);
      ck.tensors.push_back(std::move(t));
    }
    for (auto& t : ck.tensors) {
      for (float& v : t.tensor.values()) v = std::bit_cast<float>(r.u32());
    }
    if (!r.done()) throw CheckpointError("trailing bytes in checkpoint: " + origin);
    return ck;
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    {
      std::ofstream f(path, std::ios::binary);
      const std::string buf = encode();
      f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      if (!f) throw CheckpointError("cannot write " + path.string());
    }
    std::ofstream m(meta_path(path));
    for (const auto& [k, v] : meta) m << k << " = " << v << '\n';
    if (!m) throw CheckpointError("cannot write " + meta_path(path).string());
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    Checkpoint ck = decode(ss.str(), path.string());
    std::ifstream m(meta_path(path));
    std::string line;
    while (m && std::getline(m, line)) {
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) continue;
      ck.meta[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return ck;
  }

  static std::filesystem::path meta_path(const std::filesystem::path& p) { return p.string() + ".meta"; }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

}  // namespace dcrsr
