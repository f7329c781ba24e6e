#include "coordconv/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>

#include "coordconv/runtime.hpp"

namespace coordconv {

namespace {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <class T>
bool all_finite(const T* p, int64_t n);

template <>
bool all_finite<float>(const float* p, int64_t n) {
  uint32_t bad = 0;
  for (int64_t i = 0; i < n; ++i) {
    uint32_t b;
    std::memcpy(&b, p + i, sizeof(b));
    bad |= static_cast<uint32_t>((b & 0x7F800000u) == 0x7F800000u);
  }
  return bad == 0;
}

template <>
bool all_finite<double>(const double* p, int64_t n) {
  uint64_t bad = 0;
  for (int64_t i = 0; i < n; ++i) {
    uint64_t b;
    std::memcpy(&b, p + i, sizeof(b));
    bad |= static_cast<uint64_t>((b & 0x7FF0000000000000ull) == 0x7FF0000000000000ull);
  }
  return bad == 0;
}

template <class T>
bool track(Graph<T>* g, const Tensor<T>& a) {
  return g && a.requires_grad();
}
template <class T>
bool track(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  return g && (a.requires_grad() || b.requires_grad());
}

}  // namespace

template <class T>
void ensure_finite(const Tensor<T>& t, const char* op, bool is_loss) {
  FiniteChecks mode = finite_checks();
  if (mode == FiniteChecks::off) return;
  if (mode == FiniteChecks::loss_only && !is_loss) return;
  if (!all_finite(t.data(), t.numel()))
    throw NonFiniteError(std::string("non-finite value in output of ") + op);
}

// ---- elementwise ----

template <class T>
Tensor<T> add(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  require<T>(a.shape() == b.shape(), "add: shape mismatch");
  Tensor<T> y(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t i = 0, n = y.numel(); i < n; ++i) py[i] = pa[i] + pb[i];
  ensure_finite(y, "add");
  if (track(g, a, b)) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, bc = b, yc = y;
    g->record([ac, bc, yc]() mutable {
      const T* gy = yc.grad();
      int64_t n = yc.numel();
      if (ac.requires_grad()) {
        T* ga = ac.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += gy[i];
      }
      if (bc.requires_grad()) {
        T* gb = bc.grad();
        for (int64_t i = 0; i < n; ++i) gb[i] += gy[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> mul(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  require<T>(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> y(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t i = 0, n = y.numel(); i < n; ++i) py[i] = pa[i] * pb[i];
  ensure_finite(y, "mul");
  if (track(g, a, b)) {
    y.set_requires_grad(true);
    Tensor<T> ac = a, bc = b, yc = y;
    g->record([ac, bc, yc]() mutable {
      const T* gy = yc.grad();
      int64_t n = yc.numel();
      if (ac.requires_grad()) {
        T* ga = ac.grad();
        const T* pb2 = bc.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += gy[i] * pb2[i];
      }
      if (bc.requires_grad()) {
        T* gb = bc.grad();
        const T* pa2 = ac.data();
        for (int64_t i = 0; i < n; ++i) gb[i] += gy[i] * pa2[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> scale(Graph<T>* g, const Tensor<T>& x, T factor) {
  Tensor<T> y(x.shape());
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0, n = y.numel(); i < n; ++i) py[i] = px[i] * factor;
  ensure_finite(y, "scale");
  if (track(g, x)) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    g->record([xc, yc, factor]() mutable {
      const T* gy = yc.grad();
      T* gx = xc.grad();
      for (int64_t i = 0, n = yc.numel(); i < n; ++i) gx[i] += gy[i] * factor;
    });
  }
  return y;
}

template <class T>
Tensor<T> sum(Graph<T>* g, const Tensor<T>& x) {
  Tensor<T> y({1});
  const T* px = x.data();
  double acc = 0;
  for (int64_t i = 0, n = x.numel(); i < n; ++i) acc += px[i];
  y.data()[0] = static_cast<T>(acc);
  ensure_finite(y, "sum");
  if (track(g, x)) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    g->record([xc, yc]() mutable {
      T gy = yc.grad()[0];
      T* gx = xc.grad();
      for (int64_t i = 0, n = xc.numel(); i < n; ++i) gx[i] += gy;
    });
  }
  return y;
}

// ---- activations ----

template <class T>
Tensor<T> relu(Graph<T>* g, const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0, n = y.numel(); i < n; ++i) py[i] = px[i] > T(0) ? px[i] : T(0);
  ensure_finite(y, "relu");
  if (track(g, x)) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    g->record([xc, yc]() mutable {
      const T* gy = yc.grad();
      const T* px2 = xc.data();
      T* gx = xc.grad();
      for (int64_t i = 0, n = xc.numel(); i < n; ++i)
        if (px2[i] > T(0)) gx[i] += gy[i];
    });
  }
  return y;
}

template <class T>
Tensor<T> tanh_act(Graph<T>* g, const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0, n = y.numel(); i < n; ++i) py[i] = std::tanh(px[i]);
  ensure_finite(y, "tanh");
  if (track(g, x)) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    g->record([xc, yc]() mutable {
      const T* gy = yc.grad();
      const T* py2 = yc.data();
      T* gx = xc.grad();
      for (int64_t i = 0, n = xc.numel(); i < n; ++i) gx[i] += gy[i] * (T(1) - py2[i] * py2[i]);
    });
  }
  return y;
}

template <class T>
Tensor<T> sigmoid(Graph<T>* g, const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const T* px = x.data();
  T* py = y.data();
  for (int64_t i = 0, n = y.numel(); i < n; ++i) {
    T v = px[i];
    if (v >= T(0)) {
      py[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      T e = std::exp(v);
      py[i] = e / (T(1) + e);
    }
  }
  ensure_finite(y, "sigmoid");
  if (track(g, x)) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    g->record([xc, yc]() mutable {
      const T* gy = yc.grad();
      const T* py2 = yc.data();
      T* gx = xc.grad();
      for (int64_t i = 0, n = xc.numel(); i < n; ++i) gx[i] += gy[i] * py2[i] * (T(1) - py2[i]);
    });
  }
  return y;
}

// ---- dense ----

template <class T>
Tensor<T> dense(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  require<T>(x.shape().rank() == 2, "dense: x must be [n,f]");
  require<T>(w.shape().rank() == 2, "dense: weights must be [f,u]");
  require<T>(x.shape()[1] == w.shape()[0], "dense: feature count mismatch");
  int64_t n = x.shape()[0], f = x.shape()[1], u = w.shape()[1];
  if (bias.defined()) require<T>(bias.shape() == Shape{u}, "dense: bias must be [u]");

  Tensor<T> y({n, u});
  ConstMatMap<T> X(x.data(), n, f), W(w.data(), f, u);
  MatMap<T> Y(y.data(), n, u);
  Y.noalias() = X * W;
  if (bias.defined()) {
    const T* pb = bias.data();
    T* py = y.data();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t j = 0; j < u; ++j) py[r * u + j] += pb[j];
  }
  ensure_finite(y, "dense");

  bool tracked = g && (x.requires_grad() || w.requires_grad() ||
                       (bias.defined() && bias.requires_grad()));
  if (tracked) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, wc = w, bc = bias, yc = y;
    g->record([xc, wc, bc, yc, n, f, u]() mutable {
      ConstMatMap<T> GY(yc.grad(), n, u);
      if (xc.requires_grad()) {
        MatMap<T> GX(xc.grad(), n, f);
        ConstMatMap<T> W2(wc.data(), f, u);
        GX.noalias() += GY * W2.transpose();
      }
      if (wc.requires_grad()) {
        MatMap<T> GW(wc.grad(), f, u);
        ConstMatMap<T> X2(xc.data(), n, f);
        GW.noalias() += X2.transpose() * GY;
      }
      if (bc.defined() && bc.requires_grad()) {
        T* gb = bc.grad();
        const T* gy = yc.grad();
        for (int64_t r = 0; r < n; ++r)
          for (int64_t j = 0; j < u; ++j) gb[j] += gy[r * u + j];
      }
    });
  }
  return y;
}

// ---- pooling ----

template <class T>
Tensor<T> max_pool2(Graph<T>* g, const Tensor<T>& x) {
  require<T>(x.shape().rank() == 4, "max_pool2: x must be [n,h,w,c]");
  int64_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  require<T>(h % 2 == 0 && w % 2 == 0, "max_pool2: spatial extents must be even");
  int64_t ho = h / 2, wo = w / 2;
  Tensor<T> y({n, ho, wo, c});
  // 0..3 = window offset in row-major order; ties keep the first.
  std::vector<uint8_t> argmax(static_cast<size_t>(y.numel()));
  const T* px = x.data();
  T* py = y.data();
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox)
        for (int64_t ci = 0; ci < c; ++ci) {
          int64_t base = ((ni * h + oy * 2) * w + ox * 2) * c + ci;
          T best = px[base];
          uint8_t arg = 0;
          T v = px[base + c];
          if (v > best) best = v, arg = 1;
          v = px[base + w * c];
          if (v > best) best = v, arg = 2;
          v = px[base + w * c + c];
          if (v > best) best = v, arg = 3;
          int64_t oidx = ((ni * ho + oy) * wo + ox) * c + ci;
          py[oidx] = best;
          argmax[static_cast<size_t>(oidx)] = arg;
        }
  ensure_finite(y, "max_pool2");
  if (track(g, x)) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    auto am = std::make_shared<std::vector<uint8_t>>(std::move(argmax));
    g->record([xc, yc, am, n, h, w, c, ho, wo]() mutable {
      const T* gy = yc.grad();
      T* gx = xc.grad();
      for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t oy = 0; oy < ho; ++oy)
          for (int64_t ox = 0; ox < wo; ++ox)
            for (int64_t ci = 0; ci < c; ++ci) {
              int64_t oidx = ((ni * ho + oy) * wo + ox) * c + ci;
              uint8_t arg = (*am)[static_cast<size_t>(oidx)];
              int64_t dy = arg >> 1, dx = arg & 1;
              int64_t iidx = ((ni * h + oy * 2 + dy) * w + ox * 2 + dx) * c + ci;
              gx[iidx] += gy[oidx];
            }
    });
  }
  return y;
}

template <class T>
Tensor<T> global_avg_pool(Graph<T>* g, const Tensor<T>& x) {
  require<T>(x.shape().rank() == 4, "global_avg_pool: x must be [n,h,w,c]");
  int64_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  int64_t m = h * w;
  Tensor<T> y({n, c});
  const T* px = x.data();
  T* py = y.data();
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci) {
      double acc = 0;
      for (int64_t s = 0; s < m; ++s) acc += px[(ni * m + s) * c + ci];
      py[ni * c + ci] = static_cast<T>(acc / static_cast<double>(m));
    }
  ensure_finite(y, "global_avg_pool");
  if (track(g, x)) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    g->record([xc, yc, n, c, m]() mutable {
      const T* gy = yc.grad();
      T* gx = xc.grad();
      T inv = T(1) / static_cast<T>(m);
      for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t s = 0; s < m; ++s)
          for (int64_t ci = 0; ci < c; ++ci) gx[(ni * m + s) * c + ci] += gy[ni * c + ci] * inv;
    });
  }
  return y;
}

template <class T>
Tensor<T> global_max_pool(Graph<T>* g, const Tensor<T>& x) {
  require<T>(x.shape().rank() == 4, "global_max_pool: x must be [n,h,w,c]");
  int64_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  int64_t m = h * w;
  Tensor<T> y({n, c});
  std::vector<int64_t> argmax(static_cast<size_t>(n * c));
  const T* px = x.data();
  T* py = y.data();
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t ci = 0; ci < c; ++ci) {
      T best = px[ni * m * c + ci];
      int64_t arg = 0;
      for (int64_t s = 1; s < m; ++s) {
        T v = px[(ni * m + s) * c + ci];
        if (v > best) best = v, arg = s;
      }
      py[ni * c + ci] = best;
      argmax[static_cast<size_t>(ni * c + ci)] = arg;
    }
  ensure_finite(y, "global_max_pool");
  if (track(g, x)) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    auto am = std::make_shared<std::vector<int64_t>>(std::move(argmax));
    g->record([xc, yc, am, n, c, m]() mutable {
      const T* gy = yc.grad();
      T* gx = xc.grad();
      for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ci = 0; ci < c; ++ci) {
          int64_t s = (*am)[static_cast<size_t>(ni * c + ci)];
          gx[(ni * m + s) * c + ci] += gy[ni * c + ci];
        }
    });
  }
  return y;
}

// ---- batch norm ----

template <class T>
Tensor<T> batch_norm(Graph<T>* g, const Tensor<T>& x, BatchNormState<T>& state, bool training) {
  require<T>(x.shape().rank() == 4, "batch_norm: x must be [n,h,w,c]");
  int64_t c = x.shape()[3];
  require<T>(state.gamma.defined() && state.gamma.numel() == c, "batch_norm: channel mismatch");
  int64_t m = x.numel() / c;  // n*h*w values per channel
  Tensor<T> y(x.shape());
  const T* px = x.data();
  T* py = y.data();
  const T* pg = state.gamma.data();
  const T* pb = state.beta.data();

  std::vector<T> mean(static_cast<size_t>(c)), invstd(static_cast<size_t>(c));
  if (training) {
    require<T>(m > 1, "batch_norm: training mode needs more than one value per channel");
    std::vector<double> s1(static_cast<size_t>(c), 0), s2(static_cast<size_t>(c), 0);
    for (int64_t r = 0; r < m; ++r)
      for (int64_t ci = 0; ci < c; ++ci) {
        double v = px[r * c + ci];
        s1[static_cast<size_t>(ci)] += v;
        s2[static_cast<size_t>(ci)] += v * v;
      }
    T* rm = state.running_mean.data();
    T* rv = state.running_var.data();
    for (int64_t ci = 0; ci < c; ++ci) {
      double mu = s1[static_cast<size_t>(ci)] / static_cast<double>(m);
      double var = s2[static_cast<size_t>(ci)] / static_cast<double>(m) - mu * mu;
      if (var < 0) var = 0;  // rounding guard; biased variance
      mean[static_cast<size_t>(ci)] = static_cast<T>(mu);
      invstd[static_cast<size_t>(ci)] =
          static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(state.epsilon)));
      rm[ci] = state.momentum * rm[ci] + (T(1) - state.momentum) * static_cast<T>(mu);
      rv[ci] = state.momentum * rv[ci] + (T(1) - state.momentum) * static_cast<T>(var);
    }
  } else {
    const T* rm = state.running_mean.data();
    const T* rv = state.running_var.data();
    for (int64_t ci = 0; ci < c; ++ci) {
      mean[static_cast<size_t>(ci)] = rm[ci];
      invstd[static_cast<size_t>(ci)] =
          static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[ci]) + static_cast<double>(state.epsilon)));
    }
  }

  for (int64_t r = 0; r < m; ++r)
    for (int64_t ci = 0; ci < c; ++ci) {
      size_t cs = static_cast<size_t>(ci);
      py[r * c + ci] = pg[ci] * (px[r * c + ci] - mean[cs]) * invstd[cs] + pb[ci];
    }
  ensure_finite(y, "batch_norm");

  bool tracked = g && (x.requires_grad() || state.gamma.requires_grad() || state.beta.requires_grad());
  if (tracked) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, gammac = state.gamma, betac = state.beta, yc = y;
    auto mu = std::make_shared<std::vector<T>>(std::move(mean));
    auto is = std::make_shared<std::vector<T>>(std::move(invstd));
    g->record([xc, gammac, betac, yc, mu, is, m, c, training]() mutable {
      const T* gy = yc.grad();
      const T* px2 = xc.data();
      const T* pg2 = gammac.data();
      // per-channel reductions
      std::vector<double> sum_gy(static_cast<size_t>(c), 0), sum_gy_xhat(static_cast<size_t>(c), 0);
      for (int64_t r = 0; r < m; ++r)
        for (int64_t ci = 0; ci < c; ++ci) {
          size_t cs = static_cast<size_t>(ci);
          double xhat = (px2[r * c + ci] - (*mu)[cs]) * (*is)[cs];
          sum_gy[cs] += gy[r * c + ci];
          sum_gy_xhat[cs] += gy[r * c + ci] * xhat;
        }
      if (gammac.requires_grad()) {
        T* gg = gammac.grad();
        for (int64_t ci = 0; ci < c; ++ci) gg[ci] += static_cast<T>(sum_gy_xhat[static_cast<size_t>(ci)]);
      }
      if (betac.requires_grad()) {
        T* gb = betac.grad();
        for (int64_t ci = 0; ci < c; ++ci) gb[ci] += static_cast<T>(sum_gy[static_cast<size_t>(ci)]);
      }
      if (xc.requires_grad()) {
        T* gx = xc.grad();
        if (training) {
          double invm = 1.0 / static_cast<double>(m);
          for (int64_t r = 0; r < m; ++r)
            for (int64_t ci = 0; ci < c; ++ci) {
              size_t cs = static_cast<size_t>(ci);
              double xhat = (px2[r * c + ci] - (*mu)[cs]) * (*is)[cs];
              double t = gy[r * c + ci] - sum_gy[cs] * invm - xhat * sum_gy_xhat[cs] * invm;
              gx[r * c + ci] += static_cast<T>(pg2[ci] * (*is)[cs] * t);
            }
        } else {
          for (int64_t r = 0; r < m; ++r)
            for (int64_t ci = 0; ci < c; ++ci)
              gx[r * c + ci] += gy[r * c + ci] * pg2[ci] * (*is)[static_cast<size_t>(ci)];
        }
      }
    });
  }
  return y;
}

// ---- losses ----

template <class T>
Tensor<T> softmax_xent(Graph<T>* g, const Tensor<T>& logits, const std::vector<int>& targets) {
  require<T>(logits.shape().rank() == 2, "softmax_xent: logits must be [n,k]");
  int64_t n = logits.shape()[0], k = logits.shape()[1];
  require<T>(static_cast<int64_t>(targets.size()) == n, "softmax_xent: target count mismatch");
  for (int t : targets)
    if (t < 0 || t >= k) throw std::invalid_argument("softmax_xent: target index out of range");

  Tensor<T> probs({n, k});  // saved for backward
  const T* pl = logits.data();
  T* pp = probs.data();
  double acc = 0;
  for (int64_t r = 0; r < n; ++r) {
    const T* row = pl + r * k;
    T mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    double lse = static_cast<double>(mx) + std::log(denom);
    acc += lse - static_cast<double>(row[targets[static_cast<size_t>(r)]]);
    for (int64_t j = 0; j < k; ++j)
      pp[r * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
  }
  Tensor<T> loss({1});
  loss.data()[0] = static_cast<T>(acc / static_cast<double>(n));
  ensure_finite(loss, "softmax_xent", /*is_loss=*/true);

  if (track(g, logits)) {
    loss.set_requires_grad(true);
    Tensor<T> lc = logits, pc = probs, out = loss;
    auto tg = std::make_shared<std::vector<int>>(targets);
    g->record([lc, pc, out, tg, n, k]() mutable {
      T gl = out.grad()[0];
      T* gx = lc.grad();
      const T* pp2 = pc.data();
      T invn = T(1) / static_cast<T>(n);
      for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < k; ++j) gx[r * k + j] += gl * invn * pp2[r * k + j];
        gx[r * k + (*tg)[static_cast<size_t>(r)]] -= gl * invn;
      }
    });
  }
  return loss;
}

template <class T>
Tensor<T> sigmoid_xent_pixelwise(Graph<T>* g, const Tensor<T>& logits, const Tensor<T>& targets) {
  require<T>(logits.shape() == targets.shape(), "sigmoid_xent_pixelwise: shape mismatch");
  const T* pz = logits.data();
  const T* pt = targets.data();
  int64_t n = logits.numel();
  for (int64_t i = 0; i < n; ++i)
    if (pt[i] != T(0) && pt[i] != T(1))
      throw std::invalid_argument("sigmoid_xent_pixelwise: targets must be 0 or 1");
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    double z = pz[i], t = pt[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor<T> loss({1});
  loss.data()[0] = static_cast<T>(acc / static_cast<double>(n));
  ensure_finite(loss, "sigmoid_xent_pixelwise", /*is_loss=*/true);

  if (track(g, logits)) {
    loss.set_requires_grad(true);
    Tensor<T> lc = logits, tc = targets, out = loss;
    g->record([lc, tc, out, n]() mutable {
      T gl = out.grad()[0];
      T* gx = lc.grad();
      const T* pz2 = lc.data();
      const T* pt2 = tc.data();
      T invn = T(1) / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i) {
        double z = pz2[i];
        double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        gx[i] += gl * invn * static_cast<T>(s - static_cast<double>(pt2[i]));
      }
    });
  }
  return loss;
}

template <class T>
Tensor<T> mse_loss(Graph<T>* g, const Tensor<T>& pred, const Tensor<T>& target) {
  require<T>(pred.shape() == target.shape(), "mse_loss: shape mismatch");
  const T* pp = pred.data();
  const T* pt = target.data();
  int64_t n = pred.numel();
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(pp[i]) - static_cast<double>(pt[i]);
    acc += d * d;
  }
  Tensor<T> loss({1});
  loss.data()[0] = static_cast<T>(acc / static_cast<double>(n));
  ensure_finite(loss, "mse_loss", /*is_loss=*/true);

  if (track(g, pred)) {
    loss.set_requires_grad(true);
    Tensor<T> pc = pred, tc = target, out = loss;
    g->record([pc, tc, out, n]() mutable {
      T gl = out.grad()[0];
      T* gx = pc.grad();
      const T* pp2 = pc.data();
      const T* pt2 = tc.data();
      T f = gl * T(2) / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i) gx[i] += f * (pp2[i] - pt2[i]);
    });
  }
  return loss;
}

// ---- add_coords ----

template <class T>
Tensor<T> add_coords(Graph<T>* g, const Tensor<T>& x, const CoordSpec& coords) {
  require<T>(x.shape().rank() == 4, "add_coords: x must be [n,h,w,c]");
  int64_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  int d = coords.extra_channels();
  Tensor<T> y({n, h, w, c + d});

  std::vector<T> ival(static_cast<size_t>(h)), jval(static_cast<size_t>(w));
  for (int64_t i = 0; i < h; ++i)
    ival[static_cast<size_t>(i)] = h == 1 ? T(0) : static_cast<T>(2.0 * i / (h - 1) - 1.0);
  for (int64_t j = 0; j < w; ++j)
    jval[static_cast<size_t>(j)] = w == 1 ? T(0) : static_cast<T>(2.0 * j / (w - 1) - 1.0);
  double corner = std::sqrt((h / 2.0) * (h / 2.0) + (w / 2.0) * (w / 2.0));

  const T* px = x.data();
  T* py = y.data();
  int64_t co = c + d;
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const T* src = px + ((ni * h + i) * w + j) * c;
        T* dst = py + ((ni * h + i) * w + j) * co;
        std::memcpy(dst, src, static_cast<size_t>(c) * sizeof(T));
        dst[c] = ival[static_cast<size_t>(i)];
        dst[c + 1] = jval[static_cast<size_t>(j)];
        if (coords.with_r) {
          double r = std::sqrt((i - h / 2.0) * (i - h / 2.0) + (j - w / 2.0) * (j - w / 2.0));
          dst[c + 2] = static_cast<T>(coords.r_normalized ? r / corner : r);
        }
      }
  ensure_finite(y, "add_coords");

  if (track(g, x)) {
    y.set_requires_grad(true);
    Tensor<T> xc = x, yc = y;
    g->record([xc, yc, n, h, w, c, co]() mutable {
      const T* gy = yc.grad();
      T* gx = xc.grad();
      for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t i = 0; i < h; ++i)
          for (int64_t j = 0; j < w; ++j) {
            const T* src = gy + ((ni * h + i) * w + j) * co;
            T* dst = gx + ((ni * h + i) * w + j) * c;
            for (int64_t ci = 0; ci < c; ++ci) dst[ci] += src[ci];
          }
    });
  }
  return y;
}

#define COORDCONV_INSTANTIATE(T)                                                                  \
  template void ensure_finite<T>(const Tensor<T>&, const char*, bool);                            \
  template Tensor<T> add<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scale<T>(Graph<T>*, const Tensor<T>&, T);                                    \
  template Tensor<T> sum<T>(Graph<T>*, const Tensor<T>&);                                         \
  template Tensor<T> relu<T>(Graph<T>*, const Tensor<T>&);                                        \
  template Tensor<T> tanh_act<T>(Graph<T>*, const Tensor<T>&);                                    \
  template Tensor<T> sigmoid<T>(Graph<T>*, const Tensor<T>&);                                     \
  template Tensor<T> dense<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> max_pool2<T>(Graph<T>*, const Tensor<T>&);                                   \
  template Tensor<T> global_avg_pool<T>(Graph<T>*, const Tensor<T>&);                             \
  template Tensor<T> global_max_pool<T>(Graph<T>*, const Tensor<T>&);                             \
  template Tensor<T> batch_norm<T>(Graph<T>*, const Tensor<T>&, BatchNormState<T>&, bool);        \
  template Tensor<T> softmax_xent<T>(Graph<T>*, const Tensor<T>&, const std::vector<int>&);       \
  template Tensor<T> sigmoid_xent_pixelwise<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> mse_loss<T>(Graph<T>*, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> add_coords<T>(Graph<T>*, const Tensor<T>&, const CoordSpec&);

COORDCONV_INSTANTIATE(float)
COORDCONV_INSTANTIATE(double)
#undef COORDCONV_INSTANTIATE

}  // namespace coordconv
