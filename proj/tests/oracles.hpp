// Reference implementations used as test oracles. Everything here is written
// as plain loops, independent of the library's im2col/GEMM machinery, so the
// two sides can disagree when one of them is wrong.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "coordconv/ops.hpp"
#include "coordconv/tensor.hpp"

namespace oracle {

struct Pad {
  int64_t out, top;  // output extent and leading zero-pad for one axis
};

// "same": out = ceil(in/stride), total pad = max(0,(out-1)*stride + k - in),
// split floor-before / ceil-after. "valid": out = (in-k)/stride + 1.
inline Pad pad_axis(int64_t in, int64_t k, int64_t stride, coordconv::Padding padding) {
  if (padding == coordconv::Padding::same) {
    int64_t out = (in + stride - 1) / stride;
    int64_t total = std::max<int64_t>(0, (out - 1) * stride + k - in);
    return {out, total / 2};
  }
  return {(in - k) / stride + 1, 0};
}

// Quadruple-loop cross-correlation, NHWC input, HWIO weight.
template <class T>
coordconv::Tensor<T> conv2d_direct(const coordconv::Tensor<T>& x, const coordconv::Tensor<T>& w,
                                   const coordconv::Tensor<T>& bias, int64_t stride,
                                   coordconv::Padding padding) {
  int64_t n = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], c = x.shape()[3];
  int64_t k = w.shape()[0], co = w.shape()[3];
  Pad ph = pad_axis(h, k, stride, padding);
  Pad pw = pad_axis(wd, k, stride, padding);
  coordconv::Tensor<T> y({n, ph.out, pw.out, co});
  const T* xp = x.data();
  const T* wp = w.data();
  T* yp = y.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t oy = 0; oy < ph.out; ++oy)
      for (int64_t ox = 0; ox < pw.out; ++ox)
        for (int64_t f = 0; f < co; ++f) {
          double acc = bias.defined() ? static_cast<double>(bias.data()[f]) : 0.0;
          for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
              int64_t iy = oy * stride + ky - ph.top;
              int64_t ix = ox * stride + kx - pw.top;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              for (int64_t ci = 0; ci < c; ++ci)
                acc += static_cast<double>(xp[((b * h + iy) * wd + ix) * c + ci]) *
                       static_cast<double>(wp[((ky * k + kx) * c + ci) * co + f]);
            }
          yp[((b * ph.out + oy) * pw.out + ox) * co + f] = static_cast<T>(acc);
        }
  return y;
}

// Adjoint of the same-padded strided conv: scatter each small-side element
// through the kernel taps onto the big side. Weight is [k,k,c_out,c_in]
// (the mapping big->small reads it as HWIO).
template <class T>
coordconv::Tensor<T> conv2d_transpose_direct(const coordconv::Tensor<T>& x,
                                             const coordconv::Tensor<T>& w,
                                             const coordconv::Tensor<T>& bias, int64_t stride) {
  int64_t n = x.shape()[0], hs = x.shape()[1], ws = x.shape()[2], c = x.shape()[3];
  int64_t k = w.shape()[0], co = w.shape()[2];
  int64_t hb = hs * stride, wb = ws * stride;
  Pad ph = pad_axis(hb, k, stride, coordconv::Padding::same);
  Pad pw = pad_axis(wb, k, stride, coordconv::Padding::same);
  coordconv::Tensor<T> y({n, hb, wb, co}, T(0));
  const T* xp = x.data();
  const T* wp = w.data();
  T* yp = y.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t sy = 0; sy < hs; ++sy)
      for (int64_t sx = 0; sx < ws; ++sx)
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx) {
            int64_t by = sy * stride + ky - ph.top;
            int64_t bx = sx * stride + kx - pw.top;
            if (by < 0 || by >= hb || bx < 0 || bx >= wb) continue;
            for (int64_t f = 0; f < co; ++f)
              for (int64_t ci = 0; ci < c; ++ci)
                yp[((b * hb + by) * wb + bx) * co + f] +=
                    xp[((b * hs + sy) * ws + sx) * c + ci] * wp[((ky * k + kx) * co + f) * c + ci];
          }
  if (bias.defined())
    for (int64_t b = 0; b < n; ++b)
      for (int64_t p = 0; p < hb * wb; ++p)
        for (int64_t f = 0; f < co; ++f) yp[(b * hb * wb + p) * co + f] += bias.data()[f];
  return y;
}

// Independent restatement of the PRNG's published algorithm (splitmix64).
inline uint64_t splitmix64_reference(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Random tensors from std::mt19937 so oracle tests do not depend on the
// library's own generator.
template <class T>
coordconv::Tensor<T> random_tensor(coordconv::Shape shape, std::mt19937& gen, double lo = -1.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  coordconv::Tensor<T> t{std::move(shape)};
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(dist(gen));
  return t;
}

template <class T>
double max_abs_diff(const coordconv::Tensor<T>& a, const coordconv::Tensor<T>& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  return m;
}

template <class T>
double max_rel_diff(const coordconv::Tensor<T>& a, const coordconv::Tensor<T>& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double av = a.data()[i], bv = b.data()[i];
    m = std::max(m, std::abs(av - bv) / std::max({std::abs(av), std::abs(bv), 1e-8}));
  }
  return m;
}

template <class T>
double dot(const coordconv::Tensor<T>& a, const coordconv::Tensor<T>& b) {
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    s += static_cast<double>(a.data()[i]) * static_cast<double>(b.data()[i]);
  return s;
}

}  // namespace oracle
