#include <Eigen/Core>
#include <cstring>

#include "coordconv/ops.hpp"
#include "coordconv/runtime.hpp"

// im2col layout note: columns are channel-major — column index ci*k*k + ky*k
// + kx — and the packed weight matrix matches, so a weight slice by input
// channel is a contiguous row block. The fused coord_conv path leans on
// that: it runs the plain conv2d kernel on the data slice and a second small
// GEMM on the coordinate slice, then adds. With zeroed coordinate weights
// the second term is an exact +0 per element, which keeps the fused op
// bit-identical to conv2d (one concatenated GEMM would not be: the BLAS
// kernel may regroup partial sums when K changes).

namespace coordconv {

namespace {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Geometry of a strided conv between a "big" grid (the conv's input side)
// and a "small" grid (its output side). conv2d maps big -> small;
// conv2d_transpose maps small -> big over the same geometry.
struct Geom {
  int64_t hb = 0, wb = 0, cb = 0;  // big side (spatial + channels)
  int64_t hs = 0, ws = 0;          // small side
  int64_t k = 1, s = 1;
  int64_t pad_top = 0, pad_left = 0;

  int64_t cols() const { return k * k * cb; }
};

Geom make_geom(int64_t hb, int64_t wb, int64_t cb, int k, int s, Padding padding) {
  Geom g;
  g.hb = hb;
  g.wb = wb;
  g.cb = cb;
  g.k = k;
  g.s = s;
  if (padding == Padding::same) {
    g.hs = (hb + s - 1) / s;
    g.ws = (wb + s - 1) / s;
    int64_t pad_h = std::max<int64_t>(0, (g.hs - 1) * s + k - hb);
    int64_t pad_w = std::max<int64_t>(0, (g.ws - 1) * s + k - wb);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    require(hb >= k && wb >= k, "conv2d: valid padding needs extents >= k");
    g.hs = (hb - k) / s + 1;
    g.ws = (wb - k) / s + 1;
  }
  return g;
}

// Gather one chunk of small-grid rows [oy0, oy1) from a big-side image into
// col, laid out [row, ci*k*k + ky*k + kx].
template <class T>
void build_col(const T* big, T* col, const Geom& g, int64_t oy0, int64_t oy1) {
  int64_t kk = g.k * g.k;
  int64_t K = g.cols();
  T* dst = col;
  for (int64_t oy = oy0; oy < oy1; ++oy)
    for (int64_t ox = 0; ox < g.ws; ++ox, dst += K) {
      int64_t iy0 = oy * g.s - g.pad_top;
      int64_t ix0 = ox * g.s - g.pad_left;
      for (int64_t ky = 0; ky < g.k; ++ky) {
        int64_t iy = iy0 + ky;
        bool row_ok = iy >= 0 && iy < g.hb;
        for (int64_t kx = 0; kx < g.k; ++kx) {
          int64_t ix = ix0 + kx;
          int64_t tap = ky * g.k + kx;
          if (row_ok && ix >= 0 && ix < g.wb) {
            const T* src = big + (iy * g.wb + ix) * g.cb;
            for (int64_t ci = 0; ci < g.cb; ++ci) dst[ci * kk + tap] = src[ci];
          } else {
            for (int64_t ci = 0; ci < g.cb; ++ci) dst[ci * kk + tap] = T(0);
          }
        }
      }
    }
}

// Adjoint of build_col: accumulate col values back into the big-side image.
template <class T>
void scatter_col(const T* col, T* big, const Geom& g, int64_t oy0, int64_t oy1) {
  int64_t kk = g.k * g.k;
  int64_t K = g.cols();
  const T* src = col;
  for (int64_t oy = oy0; oy < oy1; ++oy)
    for (int64_t ox = 0; ox < g.ws; ++ox, src += K) {
      int64_t iy0 = oy * g.s - g.pad_top;
      int64_t ix0 = ox * g.s - g.pad_left;
      for (int64_t ky = 0; ky < g.k; ++ky) {
        int64_t iy = iy0 + ky;
        if (iy < 0 || iy >= g.hb) continue;
        for (int64_t kx = 0; kx < g.k; ++kx) {
          int64_t ix = ix0 + kx;
          if (ix < 0 || ix >= g.wb) continue;
          int64_t tap = ky * g.k + kx;
          T* dst = big + (iy * g.wb + ix) * g.cb;
          for (int64_t ci = 0; ci < g.cb; ++ci) dst[ci] += src[ci * kk + tap];
        }
      }
    }
}

// Weights arrive HWIO [k,k,ci,co] (or [k,k,co,ci] for the transpose); the
// GEMM wants rows in the same channel-major order as build_col.
template <class T>
std::vector<T> pack_weights(const T* w, int64_t k, int64_t cin, int64_t cout) {
  std::vector<T> packed(static_cast<size_t>(k * k * cin * cout));
  int64_t kk = k * k;
  for (int64_t tap = 0; tap < kk; ++tap)
    for (int64_t ci = 0; ci < cin; ++ci) {
      const T* src = w + (tap * cin + ci) * cout;
      T* dst = packed.data() + (ci * kk + tap) * cout;
      std::memcpy(dst, src, static_cast<size_t>(cout) * sizeof(T));
    }
  return packed;
}

// Scatter packed-layout weight gradients back into HWIO layout.
template <class T>
void unpack_weight_grad(const T* packed, T* gw, int64_t k, int64_t cin, int64_t cout) {
  int64_t kk = k * k;
  for (int64_t tap = 0; tap < kk; ++tap)
    for (int64_t ci = 0; ci < cin; ++ci) {
      const T* src = packed + (ci * kk + tap) * cout;
      T* dst = gw + (tap * cin + ci) * cout;
      for (int64_t co = 0; co < cout; ++co) dst[co] += src[co];
    }
}

constexpr int64_t kChunkElems = int64_t(1) << 21;

int64_t rows_per_chunk(const Geom& g) {
  int64_t r = kChunkElems / std::max<int64_t>(1, g.ws * g.cols());
  return std::clamp<int64_t>(r, 1, g.hs);
}

template <class T>
void add_bias_rows(T* p, int64_t rows, const T* b, int64_t c) {
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) p[r * c + j] += b[j];
}

template <class T>
void validate_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                        const ConvSpec& spec, bool transpose, const char* op) {
  if (x.shape().rank() != 4) throw std::invalid_argument(std::string(op) + ": x must be [n,h,w,c]");
  if (w.shape().rank() != 4) throw std::invalid_argument(std::string(op) + ": weights must be rank 4");
  if (spec.k < 1 || spec.stride < 1)
    throw std::invalid_argument(std::string(op) + ": k and stride must be >= 1");
  if (w.shape()[0] != spec.k || w.shape()[1] != spec.k)
    throw std::invalid_argument(std::string(op) + ": weight extents disagree with spec.k");
  int64_t w_in = transpose ? w.shape()[3] : w.shape()[2];
  int64_t w_out = transpose ? w.shape()[2] : w.shape()[3];
  if (x.shape()[3] != w_in) throw std::invalid_argument(std::string(op) + ": channel mismatch");
  if (spec.c_in > 0 && spec.c_in != w_in)
    throw std::invalid_argument(std::string(op) + ": spec.c_in disagrees with weights");
  if (spec.c_out > 0 && spec.c_out != w_out)
    throw std::invalid_argument(std::string(op) + ": spec.c_out disagrees with weights");
  if (spec.bias != bias.defined())
    throw std::invalid_argument(std::string(op) + ": spec.bias disagrees with bias tensor");
  if (bias.defined() && bias.shape() != Shape{w_out})
    throw std::invalid_argument(std::string(op) + ": bias must be [c_out]");
}

}  // namespace

template <class T>
Tensor<T> conv2d(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 const ConvSpec& spec) {
  validate_conv_args(x, w, bias, spec, /*transpose=*/false, "conv2d");
  int64_t n = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], c = x.shape()[3];
  int64_t cout = w.shape()[3];
  Geom geom = make_geom(h, wd, c, spec.k, spec.stride, spec.padding);
  Tensor<T> y({n, geom.hs, geom.ws, cout});

  bool fast_1x1 = spec.k == 1 && spec.stride == 1;
  if (fast_1x1) {
    ConstMatMap<T> X(x.data(), n * h * wd, c), W(w.data(), c, cout);
    MatMap<T> Y(y.data(), n * h * wd, cout);
    Y.noalias() = X * W;
  } else {
    std::vector<T> packed = pack_weights(w.data(), spec.k, c, cout);
    ConstMatMap<T> W(packed.data(), geom.cols(), cout);
    int64_t chunk = rows_per_chunk(geom);
    std::vector<T> col(static_cast<size_t>(chunk * geom.ws * geom.cols()));
    for (int64_t ni = 0; ni < n; ++ni) {
      const T* xin = x.data() + ni * h * wd * c;
      for (int64_t oy0 = 0; oy0 < geom.hs; oy0 += chunk) {
        int64_t oy1 = std::min(geom.hs, oy0 + chunk);
        int64_t rows = (oy1 - oy0) * geom.ws;
        build_col(xin, col.data(), geom, oy0, oy1);
        ConstMatMap<T> C(col.data(), rows, geom.cols());
        MatMap<T> Y(y.data() + ((ni * geom.hs + oy0) * geom.ws) * cout, rows, cout);
        Y.noalias() = C * W;
      }
    }
  }
  if (bias.defined()) add_bias_rows(y.data(), n * geom.hs * geom.ws, bias.data(), cout);
  ensure_finite(y, "conv2d");

  bool tracked = g && (x.requires_grad() || w.requires_grad() ||
                       (bias.defined() && bias.requires_grad()));
  if (tracked) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, wc = w, bc = bias, yc = y;
    g->record([xc, wc, bc, yc, geom, n, h, wd, c, cout, fast_1x1]() mutable {
      const T* gy = yc.grad();
      if (fast_1x1) {
        ConstMatMap<T> GY(gy, n * h * wd, cout);
        if (xc.requires_grad()) {
          MatMap<T> GX(xc.grad(), n * h * wd, c);
          ConstMatMap<T> W(wc.data(), c, cout);
          GX.noalias() += GY * W.transpose();
        }
        if (wc.requires_grad()) {
          MatMap<T> GW(wc.grad(), c, cout);
          ConstMatMap<T> X(xc.data(), n * h * wd, c);
          GW.noalias() += X.transpose() * GY;
        }
      } else {
        int64_t K = geom.cols();
        std::vector<T> packed;
        if (xc.requires_grad()) packed = pack_weights(wc.data(), geom.k, c, cout);
        std::vector<T> gw_packed;
        if (wc.requires_grad()) gw_packed.assign(static_cast<size_t>(K * cout), T(0));
        int64_t chunk = rows_per_chunk(geom);
        std::vector<T> col(static_cast<size_t>(chunk * geom.ws * K));
        std::vector<T> dcol(xc.requires_grad() ? col.size() : 0);
        for (int64_t ni = 0; ni < n; ++ni) {
          for (int64_t oy0 = 0; oy0 < geom.hs; oy0 += chunk) {
            int64_t oy1 = std::min(geom.hs, oy0 + chunk);
            int64_t rows = (oy1 - oy0) * geom.ws;
            ConstMatMap<T> GY(gy + ((ni * geom.hs + oy0) * geom.ws) * cout, rows, cout);
            if (wc.requires_grad()) {
              build_col(xc.data() + ni * h * wd * c, col.data(), geom, oy0, oy1);
              ConstMatMap<T> C(col.data(), rows, K);
              MatMap<T> GW(gw_packed.data(), K, cout);
              GW.noalias() += C.transpose() * GY;
            }
            if (xc.requires_grad()) {
              MatMap<T> DC(dcol.data(), rows, K);
              ConstMatMap<T> W(packed.data(), K, cout);
              DC.noalias() = GY * W.transpose();
              scatter_col(dcol.data(), xc.grad() + ni * h * wd * c, geom, oy0, oy1);
            }
          }
        }
        if (wc.requires_grad()) unpack_weight_grad(gw_packed.data(), wc.grad(), geom.k, c, cout);
      }
      if (bc.defined() && bc.requires_grad()) {
        T* gb = bc.grad();
        int64_t rows = n * geom.hs * geom.ws;
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cout; ++j) gb[j] += gy[r * cout + j];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> conv2d_transpose(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& bias, const ConvSpec& spec) {
  validate_conv_args(x, w, bias, spec, /*transpose=*/true, "conv2d_transpose");
  require(spec.padding == Padding::same, "conv2d_transpose: only same padding is supported");
  int64_t n = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], c = x.shape()[3];
  int64_t cout = w.shape()[2];  // big-side channels
  int64_t hb = h * spec.stride, wb = wd * spec.stride;
  Geom geom = make_geom(hb, wb, cout, spec.k, spec.stride, Padding::same);
  // consistency: the adjoint conv maps [hb,wb] back to [h,wd]
  Tensor<T> y({n, hb, wb, cout});

  std::vector<T> packed = pack_weights(w.data(), spec.k, cout, c);  // [k²·cout, c]
  int64_t K = geom.cols();
  int64_t chunk = rows_per_chunk(geom);
  std::vector<T> dcol(static_cast<size_t>(chunk * geom.ws * K));
  for (int64_t ni = 0; ni < n; ++ni) {
    T* yout = y.data() + ni * hb * wb * cout;
    for (int64_t oy0 = 0; oy0 < geom.hs; oy0 += chunk) {
      int64_t oy1 = std::min(geom.hs, oy0 + chunk);
      int64_t rows = (oy1 - oy0) * geom.ws;
      ConstMatMap<T> X(x.data() + ((ni * h + oy0) * wd) * c, rows, c);
      ConstMatMap<T> W(packed.data(), K, c);
      MatMap<T> DC(dcol.data(), rows, K);
      DC.noalias() = X * W.transpose();
      scatter_col(dcol.data(), yout, geom, oy0, oy1);
    }
  }
  if (bias.defined()) add_bias_rows(y.data(), n * hb * wb, bias.data(), cout);
  ensure_finite(y, "conv2d_transpose");

  bool tracked = g && (x.requires_grad() || w.requires_grad() ||
                       (bias.defined() && bias.requires_grad()));
  if (tracked) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, wc = w, bc = bias, yc = y;
    g->record([xc, wc, bc, yc, geom, n, h, wd, c, cout]() mutable {
      const T* gy = yc.grad();
      int64_t hb2 = geom.hb, wb2 = geom.wb;
      int64_t K = geom.cols();
      std::vector<T> packed2;
      if (xc.requires_grad()) packed2 = pack_weights(wc.data(), geom.k, cout, c);
      std::vector<T> gw_packed;
      if (wc.requires_grad()) gw_packed.assign(static_cast<size_t>(K * c), T(0));
      int64_t chunk = rows_per_chunk(geom);
      std::vector<T> col(static_cast<size_t>(chunk * geom.ws * K));
      for (int64_t ni = 0; ni < n; ++ni) {
        const T* gyin = gy + ni * hb2 * wb2 * cout;
        for (int64_t oy0 = 0; oy0 < geom.hs; oy0 += chunk) {
          int64_t oy1 = std::min(geom.hs, oy0 + chunk);
          int64_t rows = (oy1 - oy0) * geom.ws;
          build_col(gyin, col.data(), geom, oy0, oy1);
          ConstMatMap<T> C(col.data(), rows, K);
          if (xc.requires_grad()) {
            // dx = conv2d(gy, w): the forward of the adjoint pair
            MatMap<T> GX(xc.grad() + ((ni * h + oy0) * wd) * c, rows, c);
            ConstMatMap<T> W(packed2.data(), K, c);
            GX.noalias() += C * W;
          }
          if (wc.requires_grad()) {
            ConstMatMap<T> X(xc.data() + ((ni * h + oy0) * wd) * c, rows, c);
            MatMap<T> GW(gw_packed.data(), K, c);
            GW.noalias() += C.transpose() * X;
          }
        }
      }
      if (wc.requires_grad()) unpack_weight_grad(gw_packed.data(), wc.grad(), geom.k, cout, c);
      if (bc.defined() && bc.requires_grad()) {
        T* gb = bc.grad();
        int64_t rows = n * hb2 * wb2;
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cout; ++j) gb[j] += gy[r * cout + j];
      }
    });
  }
  return y;
}

namespace {

// The coordinate maps as a [1,h,w,d] tensor (shared helper for the fused
// path; add_coords computes the same values inline).
template <class T>
Tensor<T> coord_maps(int64_t h, int64_t w, const CoordSpec& coords) {
  int64_t d = coords.extra_channels();
  Tensor<T> m({1, h, w, d});
  T* pm = m.data();
  double corner = std::sqrt((h / 2.0) * (h / 2.0) + (w / 2.0) * (w / 2.0));
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      T* dst = pm + (i * w + j) * d;
      dst[0] = h == 1 ? T(0) : static_cast<T>(2.0 * i / (h - 1) - 1.0);
      dst[1] = w == 1 ? T(0) : static_cast<T>(2.0 * j / (w - 1) - 1.0);
      if (coords.with_r) {
        double r = std::sqrt((i - h / 2.0) * (i - h / 2.0) + (j - w / 2.0) * (j - w / 2.0));
        dst[2] = static_cast<T>(coords.r_normalized ? r / corner : r);
      }
    }
  return m;
}

// a [n,...] + b [1,...] broadcast over the leading axis.
template <class T>
Tensor<T> add_broadcast_n(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  int64_t n = a.shape()[0], per = a.numel() / n;
  Tensor<T> y(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t i = 0; i < per; ++i) py[ni * per + i] = pa[ni * per + i] + pb[i];
  if (g && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, bc = b, yc = y;
    g->record([ac, bc, yc, n, per]() mutable {
      const T* gy = yc.grad();
      if (ac.requires_grad()) {
        T* ga = ac.grad();
        for (int64_t i = 0; i < n * per; ++i) ga[i] += gy[i];
      }
      if (bc.requires_grad()) {
        T* gb = bc.grad();
        for (int64_t ni = 0; ni < n; ++ni)
          for (int64_t i = 0; i < per; ++i) gb[i] += gy[ni * per + i];
      }
    });
  }
  return y;
}

}  // namespace

template <class T>
Tensor<T> coord_conv(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                     const ConvSpec& spec, const CoordSpec& coords, bool fused) {
  require(x.shape().rank() == 4, "coord_conv: x must be [n,h,w,c]");
  require(w.shape().rank() == 4, "coord_conv: weights must be rank 4");
  int64_t c = x.shape()[3];
  int64_t d = coords.extra_channels();
  if (w.shape()[2] != c + d) throw std::invalid_argument("coord_conv: weights must be [k,k,c+d,c']");

  if (!fused) {
    Tensor<T> xc = add_coords(g, x, coords);
    return conv2d(g, xc, w, bias, spec);
  }

  int64_t k = spec.k, cout = w.shape()[3];
  int64_t h = x.shape()[1], wd = x.shape()[2];
  // Slice the weight into data rows [k,k,c,c'] and coordinate rows
  // [k,k,d,c']; gradients are folded back afterwards. The fold-back closure
  // is recorded first so the reverse pass runs it after the conv backwards
  // have filled the slice gradients.
  Tensor<T> w_data({k, k, c, cout});
  Tensor<T> w_coord({k, k, d, cout});
  for (int64_t tap = 0; tap < k * k; ++tap) {
    const T* src = w.data() + tap * (c + d) * cout;
    std::memcpy(w_data.data() + tap * c * cout, src, static_cast<size_t>(c * cout) * sizeof(T));
    std::memcpy(w_coord.data() + tap * d * cout, src + c * cout,
                static_cast<size_t>(d * cout) * sizeof(T));
  }
  bool track_w = g && w.requires_grad();
  if (track_w) {
    w_data.set_requires_grad(true);
    w_coord.set_requires_grad(true);
    Tensor<T> wc = w, wdc = w_data, wcc = w_coord;
    g->record([wc, wdc, wcc, k, c, d, cout]() mutable {
      T* gw = wc.grad();
      for (int64_t tap = 0; tap < k * k; ++tap) {
        const T* gd = wdc.grad() + tap * c * cout;
        const T* gcd = wcc.grad() + tap * d * cout;
        T* dst = gw + tap * (c + d) * cout;
        for (int64_t i = 0; i < c * cout; ++i) dst[i] += gd[i];
        for (int64_t i = 0; i < d * cout; ++i) dst[c * cout + i] += gcd[i];
      }
    });
  }

  ConvSpec part = spec;
  part.c_in = 0;  // channel counts differ per slice
  Tensor<T> y_data = conv2d(g, x, w_data, bias, part);
  Tensor<T> cm = coord_maps<T>(h, wd, coords);
  ConvSpec coord_part = part;
  coord_part.bias = false;
  Tensor<T> y_coord = conv2d(g, cm, w_coord, Tensor<T>{}, coord_part);
  return add_broadcast_n(g, y_data, y_coord);
}

#define COORDCONV_INSTANTIATE(T)                                                               \
  template Tensor<T> conv2d<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                               const ConvSpec&);                                               \
  template Tensor<T> conv2d_transpose<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&,        \
                                         const Tensor<T>&, const ConvSpec&);                   \
  template Tensor<T> coord_conv<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&,              \
                                   const Tensor<T>&, const ConvSpec&, const CoordSpec&, bool);

COORDCONV_INSTANTIATE(float)
COORDCONV_INSTANTIATE(double)
#undef COORDCONV_INSTANTIATE

}  // namespace coordconv
