#pragma once

#include <functional>

#include "coordconv/graph.hpp"
#include "coordconv/tensor.hpp"

namespace coordconv {

// Central-difference gradient check. f must map (graph, x) to a scalar.
// The step per element is eps * max(1, |x_i|); eps <= 0 selects the dtype
// default (1e-3 for f32, 1e-5 for f64). Returns the max over elements of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1),
// a relative error for order-one gradients with an absolute fallback where
// the true gradient vanishes (below the scale central differences resolve).
// Callers should prefer objectives with non-degenerate gradients — a plain
// sum zeroes out, e.g., every batch-norm training gradient by construction.
// Throws if f's output is not scalar or not finite.
template <class T>
T finite_diff_check(const std::function<Tensor<T>(Graph<T>*, Tensor<T>&)>& f, const Tensor<T>& x,
                    T eps = T(0));

}  // namespace coordconv
