#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "coordconv/gradcheck.hpp"
#include "coordconv/graph.hpp"
#include "coordconv/ops.hpp"
#include "coordconv/runtime.hpp"
#include "oracles.hpp"

using namespace coordconv;

namespace {

using Fn = std::function<Tensor<double>(Graph<double>*, Tensor<double>&)>;

// sum() collapses any op output to the scalar the checker needs.
Fn summed(std::function<Tensor<double>(Graph<double>*, Tensor<double>&)> op) {
  return [op = std::move(op)](Graph<double>* g, Tensor<double>& x) { return sum(g, op(g, x)); };
}

// Random-weighted sum: a plain sum gives identically-zero gradients for some
// ops (all batch-norm training gradients, coordinate weight rows under
// symmetric grids), which probes nothing. The weights are rebuilt
// deterministically per call so analytic and numeric passes see the same
// objective.
Fn weighted(std::function<Tensor<double>(Graph<double>*, Tensor<double>&)> op, uint32_t seed) {
  return [op = std::move(op), seed](Graph<double>* g, Tensor<double>& x) {
    Tensor<double> y = op(g, x);
    std::mt19937 wgen(seed);
    std::uniform_real_distribution<double> dist(0.25, 1.75);
    Tensor<double> r(y.shape());
    for (int64_t i = 0; i < r.numel(); ++i) r.data()[i] = dist(wgen);
    return sum(g, mul(g, y, r));
  };
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("gradient of sum is exact") {
  std::mt19937 gen(1);
  Tensor<double> x = oracle::random_tensor<double>({3, 4}, gen);
  double err = finite_diff_check<double>([](Graph<double>* g, Tensor<double>& t) { return sum(g, t); }, x);
  CHECK(err < 1e-10);
}

TEST_CASE("a non-finite objective is signaled, not returned") {
  Tensor<double> x({2}, 1.0);
  Fn bad = [](Graph<double>* g, Tensor<double>& t) {
    Tensor<double> y = sum(g, t);
    y.data()[0] = std::numeric_limits<double>::quiet_NaN();
    return y;
  };
  FiniteChecks saved = finite_checks();
  set_finite_checks(FiniteChecks::off);  // let the NaN reach the checker itself
  CHECK_THROWS(finite_diff_check<double>(bad, x));
  set_finite_checks(saved);
}

TEST_CASE("a non-scalar objective is rejected") {
  Tensor<double> x({2}, 1.0);
  Fn vec = [](Graph<double>* g, Tensor<double>& t) { return add(g, t, t); };
  CHECK_THROWS_AS(finite_diff_check<double>(vec, x), std::invalid_argument);
}

TEST_CASE("elementwise and activation gradients pass finite differences") {
  std::mt19937 gen(2);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> x = oracle::random_tensor<double>({2, 5}, gen, -2.0, 2.0);
    // keep relu away from its kink
    for (int64_t i = 0; i < x.numel(); ++i)
      if (std::abs(x.data()[i]) < 0.1) x.data()[i] += 0.3;

    Tensor<double> other = oracle::random_tensor<double>({2, 5}, gen, -2.0, 2.0);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return add(g, t, other);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return mul(g, t, other);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return mul(g, t, t);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([](Graph<double>* g, Tensor<double>& t) {
            return scale(g, t, -1.7);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([](Graph<double>* g, Tensor<double>& t) {
            return relu(g, t);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([](Graph<double>* g, Tensor<double>& t) {
            return tanh_act(g, t);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([](Graph<double>* g, Tensor<double>& t) {
            return sigmoid(g, t);
          }), x) < kTol);
  }
}

TEST_CASE("dense gradients pass finite differences for input, weight, and bias") {
  std::mt19937 gen(3);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> x = oracle::random_tensor<double>({3, 4}, gen);
    Tensor<double> w = oracle::random_tensor<double>({4, 2}, gen);
    Tensor<double> b = oracle::random_tensor<double>({2}, gen);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return dense(g, t, w, b);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return dense(g, x, t, b);
          }), w) < kTol);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return dense(g, x, w, t);
          }), b) < kTol);
  }
}

TEST_CASE("conv2d gradients pass finite differences across geometries") {
  std::mt19937 gen(4);
  struct Case {
    int64_t h, w, c, k, co, stride;
    Padding pad;
  };
  const Case cases[] = {
      {5, 5, 2, 3, 2, 1, Padding::same},  {6, 6, 1, 3, 3, 2, Padding::same},
      {4, 6, 2, 2, 2, 2, Padding::same},  {5, 5, 3, 3, 1, 1, Padding::valid},
      {6, 6, 2, 1, 2, 1, Padding::same},  {6, 5, 1, 5, 2, 2, Padding::same},
  };
  for (const Case& cs : cases) {
    CAPTURE(cs.k);
    CAPTURE(cs.stride);
    Tensor<double> x = oracle::random_tensor<double>({2, cs.h, cs.w, cs.c}, gen);
    Tensor<double> w = oracle::random_tensor<double>({cs.k, cs.k, cs.c, cs.co}, gen);
    Tensor<double> b = oracle::random_tensor<double>({cs.co}, gen);
    ConvSpec spec{static_cast<int>(cs.k), static_cast<int>(cs.stride), cs.pad};
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return conv2d(g, t, w, b, spec);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return conv2d(g, x, t, b, spec);
          }), w) < kTol);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return conv2d(g, x, w, t, spec);
          }), b) < kTol);
  }
}

TEST_CASE("transposed conv gradients pass finite differences") {
  std::mt19937 gen(5);
  struct Case {
    int64_t h, w, c, k, co, stride;
  };
  const Case cases[] = {{3, 3, 2, 3, 2, 2}, {2, 2, 1, 2, 3, 2}, {3, 2, 2, 4, 1, 2}, {3, 3, 1, 3, 2, 1}};
  for (const Case& cs : cases) {
    CAPTURE(cs.k);
    CAPTURE(cs.stride);
    Tensor<double> x = oracle::random_tensor<double>({1, cs.h, cs.w, cs.c}, gen);
    Tensor<double> w = oracle::random_tensor<double>({cs.k, cs.k, cs.co, cs.c}, gen);
    Tensor<double> b = oracle::random_tensor<double>({cs.co}, gen);
    ConvSpec spec{static_cast<int>(cs.k), static_cast<int>(cs.stride)};
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return conv2d_transpose(g, t, w, b, spec);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return conv2d_transpose(g, x, t, b, spec);
          }), w) < kTol);
    CHECK(finite_diff_check<double>(summed([&](Graph<double>* g, Tensor<double>& t) {
            return conv2d_transpose(g, x, w, t, spec);
          }), b) < kTol);
  }
}

TEST_CASE("coordinate ops pass finite differences on both paths") {
  std::mt19937 gen(6);
  for (bool with_r : {false, true}) {
    for (bool fused : {false, true}) {
      CAPTURE(with_r);
      CAPTURE(fused);
      CoordSpec coords{with_r};
      int64_t c = 2, d = coords.extra_channels(), co = 2, k = 3;
      Tensor<double> x = oracle::random_tensor<double>({2, 4, 4, c}, gen);
      Tensor<double> w = oracle::random_tensor<double>({k, k, c + d, co}, gen);
      Tensor<double> b = oracle::random_tensor<double>({co}, gen);
      ConvSpec spec{static_cast<int>(k)};
      CHECK(finite_diff_check<double>(weighted([&](Graph<double>* g, Tensor<double>& t) {
              return add_coords(g, t, coords);
            }, 21), x) < kTol);
      CHECK(finite_diff_check<double>(weighted([&](Graph<double>* g, Tensor<double>& t) {
              return coord_conv(g, t, w, b, spec, coords, fused);
            }, 22), x) < kTol);
      CHECK(finite_diff_check<double>(weighted([&](Graph<double>* g, Tensor<double>& t) {
              return coord_conv(g, x, t, b, spec, coords, fused);
            }, 23), w) < kTol);
      CHECK(finite_diff_check<double>(weighted([&](Graph<double>* g, Tensor<double>& t) {
              return coord_conv(g, x, w, t, spec, coords, fused);
            }, 24), b) < kTol);
    }
  }
}

TEST_CASE("pooling gradients pass finite differences away from ties") {
  std::mt19937 gen(7);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> x = oracle::random_tensor<double>({2, 4, 4, 2}, gen);
    CHECK(finite_diff_check<double>(summed([](Graph<double>* g, Tensor<double>& t) {
            return max_pool2(g, t);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([](Graph<double>* g, Tensor<double>& t) {
            return global_avg_pool(g, t);
          }), x) < kTol);
    CHECK(finite_diff_check<double>(summed([](Graph<double>* g, Tensor<double>& t) {
            return global_max_pool(g, t);
          }), x) < kTol);
  }
}

TEST_CASE("batch norm gradients pass finite differences in both modes") {
  std::mt19937 gen(8);
  for (bool training : {true, false}) {
    CAPTURE(training);
    Tensor<double> x = oracle::random_tensor<double>({3, 3, 3, 2}, gen, -2.0, 3.0);
    BatchNormState<double> proto = BatchNormState<double>::make(2);
    proto.gamma.data()[0] = 1.3;
    proto.gamma.data()[1] = 0.7;
    proto.beta.data()[0] = -0.2;
    proto.running_mean.data()[0] = 0.4;
    proto.running_var.data()[1] = 2.0;

    // fresh running stats per evaluation so train-mode side effects cancel
    auto with_fresh_state = [&](auto user) {
      return [&, user](Graph<double>* g, Tensor<double>& t) {
        BatchNormState<double> st;
        st.gamma = proto.gamma.clone();
        st.beta = proto.beta.clone();
        st.running_mean = proto.running_mean.clone();
        st.running_var = proto.running_var.clone();
        return user(g, t, st);
      };
    };
    // weighted objective: under a plain sum every training-mode gradient of
    // batch norm is identically zero (the normalized activations always sum
    // to zero), so a sum check would pass with any backward at all
    CHECK(finite_diff_check<double>(
              weighted(with_fresh_state([&](Graph<double>* g, Tensor<double>& t, BatchNormState<double>& st) {
                return batch_norm(g, t, st, training);
              }), 31),
              x) < kTol);
    CHECK(finite_diff_check<double>(
              weighted(with_fresh_state([&](Graph<double>* g, Tensor<double>& t, BatchNormState<double>& st) {
                st.gamma = t;
                return batch_norm(g, x, st, training);
              }), 32),
              proto.gamma) < kTol);
    CHECK(finite_diff_check<double>(
              weighted(with_fresh_state([&](Graph<double>* g, Tensor<double>& t, BatchNormState<double>& st) {
                st.beta = t;
                return batch_norm(g, x, st, training);
              }), 33),
              proto.beta) < kTol);
  }
}

TEST_CASE("loss gradients pass finite differences") {
  std::mt19937 gen(9);
  Tensor<double> logits = oracle::random_tensor<double>({4, 7}, gen, -2.0, 2.0);
  std::vector<int> targets{0, 3, 6, 2};
  CHECK(finite_diff_check<double>([&](Graph<double>* g, Tensor<double>& t) {
          return softmax_xent(g, t, targets);
        }, logits) < kTol);

  Tensor<double> z = oracle::random_tensor<double>({2, 3, 3, 1}, gen, -3.0, 3.0);
  Tensor<double> bt({2, 3, 3, 1});
  std::bernoulli_distribution bern(0.5);
  for (int64_t i = 0; i < bt.numel(); ++i) bt.data()[i] = bern(gen) ? 1.0 : 0.0;
  CHECK(finite_diff_check<double>([&](Graph<double>* g, Tensor<double>& t) {
          return sigmoid_xent_pixelwise(g, t, bt);
        }, z) < kTol);

  Tensor<double> pred = oracle::random_tensor<double>({5, 2}, gen);
  Tensor<double> target = oracle::random_tensor<double>({5, 2}, gen);
  CHECK(finite_diff_check<double>([&](Graph<double>* g, Tensor<double>& t) {
          return mse_loss(g, t, target);
        }, pred) < kTol);
}

TEST_CASE("a composite graph passes finite differences end to end") {
  std::mt19937 gen(10);
  Tensor<double> x = oracle::random_tensor<double>({2, 4, 4, 2}, gen);
  Tensor<double> w1 = oracle::random_tensor<double>({3, 3, 4, 3}, gen, -0.5, 0.5);
  Tensor<double> b1 = oracle::random_tensor<double>({3}, gen);
  Tensor<double> w2 = oracle::random_tensor<double>({3, 2}, gen);
  Tensor<double> b2 = oracle::random_tensor<double>({2}, gen);
  std::vector<int> targets{1, 0};
  auto net = [&](Graph<double>* g, Tensor<double>& t) {
    Tensor<double> h = coord_conv(g, t, w1, b1, ConvSpec{3}, CoordSpec{}, false);
    h = relu(g, h);
    h = max_pool2(g, h);
    h = global_avg_pool(g, h);
    h = dense(g, h, w2, b2);
    return softmax_xent(g, h, targets);
  };
  CHECK(finite_diff_check<double>(net, x) < kTol);
  auto net_w = [&](Graph<double>* g, Tensor<double>& t) {
    Tensor<double> h = coord_conv(g, x, t, b1, ConvSpec{3}, CoordSpec{}, false);
    h = relu(g, h);
    h = max_pool2(g, h);
    h = global_avg_pool(g, h);
    h = dense(g, h, w2, b2);
    return softmax_xent(g, h, targets);
  };
  CHECK(finite_diff_check<double>(net_w, w1) < kTol);
}
