// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dcrsr/autograd.hpp"
#include "dcrsr/resize.hpp"

// Differentiable NCHW operations on Var<T>. Each op computes its forward value
// eagerly and installs a closure that maps the output gradient back onto its
// inputs.
namespace dcrsr::ops {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected NCHW tensor, got " + shape_str(s));
}

// cols is (c*k*k) x (oh*ow) for one image.
template <class T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int oh, int ow, T* cols) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst + oy * ow, dst + (oy + 1) * ow, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, int c, int h, int w, int k, int stride, int pad, int oh, int ow, T* x) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (static_cast<std::size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution. x: (N,Ci,H,W); weight: (Co,Ci,k,k); bias: (Co).
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  using namespace detail;
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require_rank4(xs, "conv2d");
  if (ws.size() != 4 || ws[2] != ws[3]) throw ShapeError("conv2d: bad weight shape " + shape_str(ws));
  if (xs[1] != ws[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(xs[1]) + " channels, weight expects " +
                     std::to_string(ws[1]));
  }
  if (bias.value().size() != static_cast<std::size_t>(ws[0])) throw ShapeError("conv2d: bias size");
  const int n = xs[0], ci = xs[1], h = xs[2], w = xs[3];
  const int co = ws[0], k = ws[2];
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  if (oh < 1 || ow < 1) throw ShapeError("conv2d: input " + shape_str(xs) + " too small for kernel");
  const int kk = ci * k * k;
  const int hw = oh * ow;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  Tensor<T> out({n, co, oh, ow});
  std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kk) * hw);
  CMapMat<T> wm(weight.value().data(), co, kk);
  const T* b = bias.value().data();
  for (int i = 0; i < n; ++i) {
    const T* xi = x.value().data() + static_cast<std::size_t>(i) * ci * h * w;
    const T* colp = xi;
    if (!direct) {
      im2col(xi, ci, h, w, k, stride, pad, oh, ow, cols.data());
      colp = cols.data();
    }
    MapMat<T> om(out.data() + static_cast<std::size_t>(i) * co * hw, co, hw);
    om.noalias() = wm * CMapMat<T>(colp, kk, hw);
    for (int c = 0; c < co; ++c) om.row(c).array() += b[c];
  }

  return make_result<T>(std::move(out), {x, weight, bias}, [x, weight, bias, n, ci, h, w, co, k, stride, pad, oh, ow, kk, hw, direct](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kk) * hw);
    std::vector<T> dcols(x.requires_grad() && !direct ? static_cast<std::size_t>(kk) * hw : 0);
    CMapMat<T> wm(weight.value().data(), co, kk);
    for (int i = 0; i < n; ++i) {
      CMapMat<T> gm(g.data() + static_cast<std::size_t>(i) * co * hw, co, hw);
      if (bias.requires_grad()) {
        T* db = bias.node().grad_buffer().data();
        for (int c = 0; c < co; ++c) db[c] += gm.row(c).sum();
      }
      if (weight.requires_grad()) {
        const T* xi = x.value().data() + static_cast<std::size_t>(i) * ci * h * w;
        const T* colp = xi;
        if (!direct) {
          im2col(xi, ci, h, w, k, stride, pad, oh, ow, cols.data());
          colp = cols.data();
        }
        MapMat<T> dw(weight.node().grad_buffer().data(), co, kk);
        dw.noalias() += gm * CMapMat<T>(colp, kk, hw).transpose();
      }
      if (x.requires_grad()) {
        T* dx = x.node().grad_buffer().data() + static_cast<std::size_t>(i) * ci * h * w;
        if (direct) {
          MapMat<T>(dx, kk, hw).noalias() += wm.transpose() * gm;
        } else {
          MapMat<T>(dcols.data(), kk, hw).noalias() = wm.transpose() * gm;
          col2im_add(dcols.data(), ci, h, w, k, stride, pad, oh, ow, dx);
        }
      }
    }
  });
}

// Transposed convolution (adjoint of conv2d in x). weight: (Ci,Co,k,k).
// Output size (H-1)*stride - 2*pad + k.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  using namespace detail;
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require_rank4(xs, "conv_transpose2d");
  if (ws.size() != 4 || ws[2] != ws[3]) throw ShapeError("conv_transpose2d: bad weight shape");
  if (xs[1] != ws[0]) throw ShapeError("conv_transpose2d: channel mismatch");
  const int n = xs[0], ci = xs[1], h = xs[2], w = xs[3];
  const int co = ws[1], k = ws[2];
  if (bias.value().size() != static_cast<std::size_t>(co)) throw ShapeError("conv_transpose2d: bias size");
  const int oh = (h - 1) * stride - 2 * pad + k;
  const int ow = (w - 1) * stride - 2 * pad + k;
  if (oh < 1 || ow < 1) throw ShapeError("conv_transpose2d: output would be empty");
  const int kk = co * k * k;
  const int hw = h * w;

  Tensor<T> out({n, co, oh, ow});
  std::vector<T> cols(static_cast<std::size_t>(kk) * hw);
  CMapMat<T> wm(weight.value().data(), ci, kk);
  for (int i = 0; i < n; ++i) {
    CMapMat<T> xm(x.value().data() + static_cast<std::size_t>(i) * ci * hw, ci, hw);
    MapMat<T>(cols.data(), kk, hw).noalias() = wm.transpose() * xm;
    T* oi = out.data() + static_cast<std::size_t>(i) * co * oh * ow;
    col2im_add(cols.data(), co, oh, ow, k, stride, pad, h, w, oi);
    for (int c = 0; c < co; ++c) {
      const T b = bias.value()[c];
      T* p = oi + static_cast<std::size_t>(c) * oh * ow;
      for (int j = 0; j < oh * ow; ++j) p[j] += b;
    }
  }

  return make_result<T>(std::move(out), {x, weight, bias}, [x, weight, bias, n, ci, co, k, stride, pad, oh, ow, kk, hw, h, w](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    std::vector<T> cols(static_cast<std::size_t>(kk) * hw);
    CMapMat<T> wm(weight.value().data(), ci, kk);
    for (int i = 0; i < n; ++i) {
      const T* gi = g.data() + static_cast<std::size_t>(i) * co * oh * ow;
      if (bias.requires_grad()) {
        T* db = bias.node().grad_buffer().data();
        for (int c = 0; c < co; ++c) {
          const T* p = gi + static_cast<std::size_t>(c) * oh * ow;
          T s = 0;
          for (int j = 0; j < oh * ow; ++j) s += p[j];
          db[c] += s;
        }
      }
      if (!weight.requires_grad() && !x.requires_grad()) continue;
      im2col(gi, co, oh, ow, k, stride, pad, h, w, cols.data());
      CMapMat<T> cm(cols.data(), kk, hw);
      if (weight.requires_grad()) {
        CMapMat<T> xm(x.value().data() + static_cast<std::size_t>(i) * ci * hw, ci, hw);
        MapMat<T>(weight.node().grad_buffer().data(), ci, kk).noalias() += xm * cm.transpose();
      }
      if (x.requires_grad()) {
        MapMat<T>(x.node().grad_buffer().data() + static_cast<std::size_t>(i) * ci * hw, ci, hw).noalias() += wm * cm;
      }
    }
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v > T(0) ? v : v * slope;
  return make_result<T>(std::move(out), {x}, [x, slope](Node<T>& self) {
    const Tensor<T>& xv = x.value();
    T* dx = x.node().grad_buffer().data();
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += xv[i] > T(0) ? self.grad[i] : self.grad[i] * slope;
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu(x, T(0));
}

template <class T>
T hswish(T x) {
  return x * std::clamp(x + T(3), T(0), T(6)) / T(6);
}

template <class T>
T hswish_grad(T x) {
  if (x <= T(-3)) return T(0);
  if (x >= T(3)) return T(1);
  return (T(2) * x + T(3)) / T(6);
}

template <class T>
Var<T> hswish(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = hswish(v);
  return make_result<T>(std::move(out), {x}, [x](Node<T>& self) {
    const Tensor<T>& xv = x.value();
    T* dx = x.node().grad_buffer().data();
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += self.grad[i] * hswish_grad(xv[i]);
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().check_same(b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  return make_result<T>(std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (a.requires_grad()) a.node().grad_buffer() += self.grad;
    if (b.requires_grad()) b.node().grad_buffer() += self.grad;
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  return make_result<T>(std::move(out), {a}, [a, s](Node<T>& self) {
    T* d = a.node().grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += s * self.grad[i];
  });
}

// Channel concatenation of NCHW tensors with equal N, H, W.
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  detail::require_rank4(s0, "concat");
  int c_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    detail::require_rank4(s, "concat");
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
    }
    c_total += s[1];
  }
  const int n = s0[0];
  const std::size_t plane = static_cast<std::size_t>(s0[2]) * s0[3];
  Tensor<T> out({n, c_total, s0[2], s0[3]});
  for (int i = 0; i < n; ++i) {
    T* dst = out.data() + static_cast<std::size_t>(i) * c_total * plane;
    for (const auto& p : parts) {
      const std::size_t len = static_cast<std::size_t>(p.dim(1)) * plane;
      const T* src = p.value().data() + static_cast<std::size_t>(i) * len;
      dst = std::copy(src, src + len, dst);
    }
  }
  return make_result<T>(std::move(out), parts, [parts, n, c_total, plane](Node<T>& self) {
    for (int i = 0; i < n; ++i) {
      const T* src = self.grad.data() + static_cast<std::size_t>(i) * c_total * plane;
      for (const auto& p : parts) {
        const std::size_t len = static_cast<std::size_t>(p.dim(1)) * plane;
        if (p.requires_grad()) {
          T* dst = p.node().grad_buffer().data() + static_cast<std::size_t>(i) * len;
          for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
        }
        src += len;
      }
    }
  });
}

// Output pixel (r*i+di, r*j+dj) of channel c reads input channel c*r*r + di*r + dj.
template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  detail::require_rank4(x.shape(), "pixel_shuffle");
  if (r < 1) throw ShapeError("pixel_shuffle: factor must be >= 1");
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (cin % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: " + std::to_string(cin) + " channels not divisible by " +
                     std::to_string(r * r));
  }
  const int c = cin / (r * r);
  Tensor<T> out({n, c, h * r, w * r});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int di = 0; di < r; ++di)
        for (int dj = 0; dj < r; ++dj)
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
              out.at(b, ch, r * i + di, r * j + dj) = x.at(b, ch * r * r + di * r + dj, i, j);
  return out;
}

// Inverse permutation of pixel_shuffle.
template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& y, int r) {
  detail::require_rank4(y.shape(), "pixel_unshuffle");
  const int n = y.dim(0), c = y.dim(1), hh = y.dim(2), ww = y.dim(3);
  if (r < 1 || hh % r != 0 || ww % r != 0) throw ShapeError("pixel_unshuffle: size not divisible");
  const int h = hh / r, w = ww / r;
  Tensor<T> out({n, c * r * r, h, w});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int di = 0; di < r; ++di)
        for (int dj = 0; dj < r; ++dj)
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
              out.at(b, ch * r * r + di * r + dj, i, j) = y.at(b, ch, r * i + di, r * j + dj);
  return out;
}

template <class T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  return make_result<T>(pixel_shuffle(x.value(), r), {x}, [x, r](Node<T>& self) {
    x.node().grad_buffer() += pixel_unshuffle(self.grad, r);
  });
}

// Bicubic resize of every plane; shares its kernel with the image resizer.
template <class T>
Tensor<T> resize_bicubic(const Tensor<T>& x, int oh, int ow) {
  detail::require_rank4(x.shape(), "resize_bicubic");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const AxisTaps ty(h, oh), tx(w, ow);
  Tensor<T> out({n, c, oh, ow});
  std::vector<T> scratch;
  for (int p = 0; p < n * c; ++p) {
    resize_plane(x.data() + static_cast<std::size_t>(p) * h * w, h, w,
                 out.data() + static_cast<std::size_t>(p) * oh * ow, ty, tx, scratch);
  }
  return out;
}

template <class T>
Var<T> resize_bicubic(const Var<T>& x, int oh, int ow) {
  return make_result<T>(resize_bicubic(x.value(), oh, ow), {x}, [x, oh, ow](Node<T>& self) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const AxisTaps ty(h, oh), tx(w, ow);
    std::vector<T> scratch;
    T* dx = x.node().grad_buffer().data();
    for (int p = 0; p < n * c; ++p) {
      resize_plane_adjoint(self.grad.data() + static_cast<std::size_t>(p) * oh * ow, h, w,
                           dx + static_cast<std::size_t>(p) * h * w, ty, tx, scratch);
    }
  });
}

// 2x2 max pooling with stride 2 (floor on odd sizes).
template <class T>
Var<T> max_pool2(const Var<T>& x) {
  detail::require_rank4(x.shape(), "max_pool2");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) throw ShapeError("max_pool2: input too small");
  Tensor<T> out({n, c, oh, ow});
  std::vector<std::size_t> arg(out.size());
  const T* xv = x.value().data();
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j, ++o) {
        std::size_t best = base + static_cast<std::size_t>(2 * i) * w + 2 * j;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            const std::size_t idx = base + static_cast<std::size_t>(2 * i + di) * w + 2 * j + dj;
            if (xv[idx] > xv[best]) best = idx;
          }
        arg[o] = best;
        out[o] = xv[best];
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [x, arg = std::move(arg)](Node<T>& self) {
    T* dx = x.node().grad_buffer().data();
    for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += self.grad[i];
  });
}

// (N,C,H,W) -> (N,C,1,1)
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  detail::require_rank4(x.shape(), "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> out({n, c, 1, 1});
  for (int p = 0; p < n * c; ++p) {
    const T* src = x.value().data() + p * plane;
    T s = 0;
    for (std::size_t j = 0; j < plane; ++j) s += src[j];
    out[p] = s / static_cast<T>(plane);
  }
  return make_result<T>(std::move(out), {x}, [x, n, c, plane](Node<T>& self) {
    T* dx = x.node().grad_buffer().data();
    for (int p = 0; p < n * c; ++p) {
      const T g = self.grad[p] / static_cast<T>(plane);
      for (std::size_t j = 0; j < plane; ++j) dx[p * plane + j] += g;
    }
  });
}

// sum(|a - b|) * factor, as a scalar node. Subgradient 0 at a == b.
template <class T>
Var<T> abs_diff_sum(const Var<T>& a, const Var<T>& b, T factor) {
  a.value().check_same(b.value(), "abs_diff_sum");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  T s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  Tensor<T> out({1}, s * factor);
  return make_result<T>(std::move(out), {a, b}, [a, b, factor](Node<T>& self) {
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    const T g = self.grad[0] * factor;
    T* da = a.requires_grad() ? a.node().grad_buffer().data() : nullptr;
    T* db = b.requires_grad() ? b.node().grad_buffer().data() : nullptr;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T d = av[i] - bv[i];
      const T sg = d > T(0) ? g : (d < T(0) ? -g : T(0));
      if (da) da[i] += sg;
      if (db) db[i] -= sg;
    }
  });
}

// log(1 + exp(z)) without overflow.
template <class T>
T softplus(T z) {
  return z > T(0) ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

template <class T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

// Mean binary cross-entropy of sigmoid(logits) against a constant label in {0,1}.
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, T label) {
  const Tensor<T>& z = logits.value();
  T s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) s += label > T(0.5) ? softplus(-z[i]) : softplus(z[i]);
  const T inv = T(1) / static_cast<T>(z.size());
  Tensor<T> out({1}, s * inv);
  return make_result<T>(std::move(out), {logits}, [logits, label, inv](Node<T>& self) {
    const Tensor<T>& z = logits.value();
    T* dz = logits.node().grad_buffer().data();
    for (std::size_t i = 0; i < z.size(); ++i) dz[i] += self.grad[0] * inv * (sigmoid(z[i]) - label);
  });
}

// Weighted sum of scalar nodes.
template <class T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: size mismatch");
  T s = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().size() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    s += weights[i] * terms[i].value()[0];
  }
  return make_result<T>(Tensor<T>({1}, s), terms, [terms, weights](Node<T>& self) {
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (terms[i].requires_grad()) terms[i].node().grad_buffer()[0] += weights[i] * self.grad[0];
    }
  });
}

}  // namespace dcrsr::ops
