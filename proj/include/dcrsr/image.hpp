// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcrsr/resize.hpp"
#include "dcrsr/tensor.hpp"

namespace dcrsr {

enum class ColorSpace { rgb, y, feature };

// Channel-major (C,H,W) image or feature map. Image-tagged tensors (rgb, y)
// hold values in [0,1].
struct ImageTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  ColorSpace space = ColorSpace::rgb;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int c, int h, int w, ColorSpace s = ColorSpace::rgb, float fill = 0.0f)
      : channels(c), height(h), width(w), space(s) {
    if (c < 1 || h < 1 || w < 1) throw InvalidSize("image dimensions must be positive");
    data.assign(static_cast<std::size_t>(c) * h * w, fill);
  }

  bool is_image() const { return space != ColorSpace::feature; }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  // Checks the image-tag invariants.
  void validate() const {
    if (channels < 1 || height < 1 || width < 1) throw InvalidSize("image dimensions must be positive");
    if (data.size() != static_cast<std::size_t>(channels) * height * width) throw ShapeError("image data size mismatch");
    if (is_image()) {
      if (channels != 1 && channels != 3) throw ShapeError("image tensors have 1 or 3 channels");
      for (float v : data) {
        if (!(v >= 0.0f && v <= 1.0f)) throw ShapeError("image values must lie in [0,1]");
      }
    }
  }

  ImageTensor crop(int y0, int x0, int h, int w) const {
    if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > height || x0 + w > width) throw InvalidSize("crop outside image");
    ImageTensor out(channels, h, w, space);
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(c, y, x) = at(c, y0 + y, x0 + x);
    return out;
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// Separable cubic (a = -0.5) resize with clamp-to-edge borders. Image-tagged
// results are clamped to [0,1]; feature maps are left unbounded.
inline ImageTensor bicubic_resize(const ImageTensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw InvalidSize("bicubic_resize target must be at least 1x1");
  const AxisTaps ty(img.height, out_h), tx(img.width, out_w);
  ImageTensor out(img.channels, out_h, out_w, img.space);
  std::vector<float> scratch;
  for (int c = 0; c < img.channels; ++c) {
    resize_plane(img.data.data() + c * img.plane(), img.height, img.width, out.data.data() + c * out.plane(), ty, tx,
                 scratch);
  }
  if (out.is_image()) {
    for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

inline float quantize8(float v) { return std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f; }

// Stacks equally-sized images into an (N,C,H,W) tensor.
template <class T = float>
Tensor<T> to_batch(const std::vector<const ImageTensor*>& imgs) {
  if (imgs.empty()) throw ShapeError("empty batch");
  const ImageTensor& f = *imgs.front();
  Tensor<T> out({static_cast<int>(imgs.size()), f.channels, f.height, f.width});
  T* dst = out.data();
  for (const ImageTensor* im : imgs) {
    if (im->channels != f.channels || im->height != f.height || im->width != f.width) {
      throw ShapeError("batch images differ in shape");
    }
    dst = std::transform(im->data.begin(), im->data.end(), dst, [](float v) { return static_cast<T>(v); });
  }
  return out;
}

template <class T = float>
Tensor<T> to_batch(const ImageTensor& img) {
  return to_batch<T>(std::vector<const ImageTensor*>{&img});
}

template <class T>
ImageTensor from_batch(const Tensor<T>& t, int index, ColorSpace space) {
  if (t.rank() != 4 || index < 0 || index >= t.dim(0)) throw ShapeError("from_batch: bad index or rank");
  ImageTensor out(t.dim(1), t.dim(2), t.dim(3), space);
  const T* src = t.data() + static_cast<std::size_t>(index) * out.data.size();
  std::transform(src, src + out.data.size(), out.data.begin(), [](T v) { return static_cast<float>(v); });
  return out;
}

// 8-bit PNG decode to RGB in [0,1] (v / 255). Gray and alpha inputs are
// converted to plain RGB.
inline ImageTensor read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageIoError("cannot decode " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageIoError("cannot decode " + path.string() + ": " + image.message);
  }
  const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
  ImageTensor out(3, h, w, ColorSpace::rgb);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return out;
}

// Clamps to [0,1] and writes an 8-bit RGB (3-channel) or gray (1-channel) PNG.
inline void write_png(const std::filesystem::path& path, const ImageTensor& img) {
  if (img.channels != 1 && img.channels != 3) throw ImageIoError("PNG output needs 1 or 3 channels");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<png_byte> buf(static_cast<std::size_t>(img.channels) * img.plane());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        buf[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            static_cast<png_byte>(std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw ImageIoError("cannot write " + path.string() + ": " + image.message);
  }
}

}  // namespace dcrsr
