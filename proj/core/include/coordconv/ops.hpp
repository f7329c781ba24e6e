#pragma once

#include <vector>

#include "coordconv/graph.hpp"
#include "coordconv/tensor.hpp"

// Neural-net ops on NHWC tensors. Every op takes the tape as its first
// argument; pass nullptr for inference (no backward closures are recorded).
// Convolutions are cross-correlations (no kernel flip) with HWIO weights
// [k, k, c_in, c_out]. "same" padding distributes the k-1 total pad as
// floor((k-1)/2) before and ceil((k-1)/2) after, giving ceil(extent/stride)
// outputs; "valid" pads nothing.

namespace coordconv {

enum class Padding { same, valid };

// c_in/c_out are optional declarations (0 = infer from the weight tensor);
// when set they are validated against it. bias=false requires an undefined
// bias tensor.
struct ConvSpec {
  int k = 1;
  int stride = 1;
  Padding padding = Padding::same;
  int c_in = 0;
  int c_out = 0;
  bool bias = true;
};

// Coordinate channels appended by add_coords: i (constant per row) and j
// (constant per column), each mapped linearly to [-1, 1] (an extent of 1
// maps to 0); optionally r, the euclidean distance from the image center
// (h/2, w/2), divided by the largest corner distance when normalized.
struct CoordSpec {
  bool with_r = false;
  bool r_normalized = true;
  int extra_channels() const { return with_r ? 3 : 2; }
};

template <class T>
struct BatchNormState {
  Tensor<T> gamma, beta;              // learned, per channel
  Tensor<T> running_mean, running_var;  // updated in training mode only
  T momentum = T(0.9);
  T epsilon = T(1e-5);

  static BatchNormState make(int64_t channels) {
    BatchNormState s;
    s.gamma = Tensor<T>({channels}, T(1));
    s.beta = Tensor<T>({channels}, T(0));
    s.running_mean = Tensor<T>({channels}, T(0));
    s.running_var = Tensor<T>({channels}, T(1));
    return s;
  }
};

// ---- elementwise / reduction ----
template <class T>
Tensor<T> add(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> mul(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> scale(Graph<T>* g, const Tensor<T>& x, T factor);
template <class T>
Tensor<T> sum(Graph<T>* g, const Tensor<T>& x);

template <class T>
Tensor<T> relu(Graph<T>* g, const Tensor<T>& x);
template <class T>
Tensor<T> tanh_act(Graph<T>* g, const Tensor<T>& x);
template <class T>
Tensor<T> sigmoid(Graph<T>* g, const Tensor<T>& x);

// ---- dense ----
// x [n, f], w [f, u], bias [u] or undefined.
template <class T>
Tensor<T> dense(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

// ---- convolution family ----
// x [n,h,w,c], w [k,k,c,c'], bias [c'] or undefined.
template <class T>
Tensor<T> conv2d(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 const ConvSpec& spec);

// Adjoint of the same-padded strided conv2d: x [n,h,w,c], w [k,k,c',c],
// output [n, h*stride, w*stride, c'], bias added after the scatter.
template <class T>
Tensor<T> conv2d_transpose(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& bias, const ConvSpec& spec);

template <class T>
Tensor<T> add_coords(Graph<T>* g, const Tensor<T>& x, const CoordSpec& coords);

// conv2d(add_coords(x)). The default fused path never materializes the
// concatenated tensor: the weight rows are split into a data part and a
// coordinate part, the coordinate contribution (batch-independent) is
// computed once per call and broadcast over n. Same parameters, same math;
// the two routes agree to float round-off, not bit-exactly. Because the data
// part runs the plain conv2d kernel unchanged, zeroing the coordinate rows
// makes the fused op bit-identical to that conv2d: the coordinate term is an
// exact +0 per element.
template <class T>
Tensor<T> coord_conv(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                     const ConvSpec& spec, const CoordSpec& coords, bool fused = true);

// ---- pooling ----
// 2x2 max pool, stride 2; both spatial extents must be even. Ties route the
// gradient to the first maximal element in row-major window order.
template <class T>
Tensor<T> max_pool2(Graph<T>* g, const Tensor<T>& x);

// [n,h,w,c] -> [n,c], mean over h*w.
template <class T>
Tensor<T> global_avg_pool(Graph<T>* g, const Tensor<T>& x);

// [n,h,w,c] -> [n,c], max over h*w. Ties route the gradient to the first
// maximal position in row-major order.
template <class T>
Tensor<T> global_max_pool(Graph<T>* g, const Tensor<T>& x);

// ---- normalization ----
// Per-channel batch norm over (n,h,w). Training mode normalizes with batch
// statistics (biased variance) and updates the running stats in place;
// eval mode normalizes with the running stats and records nothing for them.
template <class T>
Tensor<T> batch_norm(Graph<T>* g, const Tensor<T>& x, BatchNormState<T>& state, bool training);

// ---- losses (mean over batch; scalar output) ----
// logits [n, k], targets in [0, k).
template <class T>
Tensor<T> softmax_xent(Graph<T>* g, const Tensor<T>& logits, const std::vector<int>& targets);

// Numerically stable elementwise binary cross-entropy on logits,
// max(z,0) - z*t + log1p(exp(-|z|)), averaged over every element.
// Targets must be 0 or 1.
template <class T>
Tensor<T> sigmoid_xent_pixelwise(Graph<T>* g, const Tensor<T>& logits, const Tensor<T>& targets);

template <class T>
Tensor<T> mse_loss(Graph<T>* g, const Tensor<T>& pred, const Tensor<T>& target);

// Scans for non-finite values per the global FiniteChecks mode; throws
// NonFiniteError naming the producing op. Ops call this on their outputs.
template <class T>
void ensure_finite(const Tensor<T>& t, const char* op, bool is_loss = false);

}  // namespace coordconv
