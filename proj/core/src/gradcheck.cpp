#include "coordconv/gradcheck.hpp"

#include <cmath>

#include "coordconv/runtime.hpp"

namespace coordconv {

template <class T>
T finite_diff_check(const std::function<Tensor<T>(Graph<T>*, Tensor<T>&)>& f, const Tensor<T>& x,
                    T eps) {
  if (eps <= T(0)) eps = std::is_same_v<T, float> ? T(1e-3) : T(1e-5);

  Tensor<T> xa = x.clone();
  xa.set_requires_grad(true);
  Graph<T> g;
  Tensor<T> y = f(&g, xa);
  if (y.numel() != 1) throw std::invalid_argument("finite_diff_check: f must be scalar-valued");
  if (!std::isfinite(static_cast<double>(y.item())))
    throw NonFiniteError("finite_diff_check: f produced a non-finite value");
  g.backward(y);

  Tensor<T> xn = x.clone();
  T* p = xn.data();
  T max_rel = T(0);
  for (int64_t i = 0, n = xn.numel(); i < n; ++i) {
    T orig = p[i];
    T step = eps * std::max(T(1), std::abs(orig));
    p[i] = orig + step;
    T fp = f(nullptr, xn).item();
    p[i] = orig - step;
    T fm = f(nullptr, xn).item();
    p[i] = orig;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
      throw NonFiniteError("finite_diff_check: f produced a non-finite value");
    T numeric = (fp - fm) / (T(2) * step);
    T analytic = xa.grad()[i];
    // Floor the denominator at 1: a pure ratio can never pass where the true
    // gradient is 0 (central differences leave noise of order eps*|f|/step),
    // and the objectives here keep gradients of order one.
    T denom = std::max({std::abs(analytic), std::abs(numeric), T(1)});
    max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
  }
  return max_rel;
}

template float finite_diff_check<float>(const std::function<Tensor<float>(Graph<float>*, Tensor<float>&)>&,
                                        const Tensor<float>&, float);
template double finite_diff_check<double>(
    const std::function<Tensor<double>(Graph<double>*, Tensor<double>&)>&, const Tensor<double>&,
    double);

}  // namespace coordconv
