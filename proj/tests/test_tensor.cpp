#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "coordconv/graph.hpp"
#include "coordconv/ops.hpp"
#include "coordconv/tensor.hpp"

using namespace coordconv;

TEST_CASE("shape rejects zero and negative extents") {
  CHECK_THROWS_AS(Shape({0}), std::invalid_argument);
  CHECK_THROWS_AS(Shape({2, -1}), std::invalid_argument);
  CHECK_THROWS_AS(Shape({4, 0, 3}), std::invalid_argument);
  CHECK(Shape({2, 3}).numel() == 6);
  CHECK(Shape({2, 3}).rank() == 2);
}

TEST_CASE("constant fill produces the constant") {
  Tensor<float> t({2, 2});
  for (int64_t i = 0; i < 4; ++i) CHECK(t.data()[i] == 0.0f);
  Tensor<float> u({2, 2}, 1.5f);
  for (int64_t i = 0; i < 4; ++i) CHECK(u.data()[i] == 1.5f);
}

TEST_CASE("from validates the element count") {
  CHECK_THROWS_AS(Tensor<float>::from({3}, {1.0f, 2.0f}), std::invalid_argument);
  Tensor<float> t = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
  CHECK(t.data()[3] == 4.0f);
}

TEST_CASE("copies are shallow, clone is deep") {
  Tensor<float> a = Tensor<float>::from({2}, {1, 2});
  Tensor<float> b = a;
  b.data()[0] = 9;
  CHECK(a.data()[0] == 9.0f);
  CHECK(a.shares_data(b));

  Tensor<float> c = a.clone();
  c.data()[0] = 5;
  CHECK(a.data()[0] == 9.0f);
  CHECK(!a.shares_data(c));
}

TEST_CASE("reshape shares buffers and validates the element count") {
  Tensor<float> a = Tensor<float>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<float> b = a.reshape({3, 2});
  CHECK(b.shape() == Shape({3, 2}));
  CHECK(a.shares_data(b));
  CHECK_THROWS_AS(a.reshape({4}), std::invalid_argument);

  a.set_requires_grad(true);
  Tensor<float> c = a.reshape({6});
  CHECK(c.requires_grad());
  c.grad()[0] = 3.0f;
  CHECK(a.grad()[0] == 3.0f);
}

TEST_CASE("item only works on scalars") {
  CHECK(Tensor<float>::from({1}, {7}).item() == 7.0f);
  CHECK_THROWS_AS(Tensor<float>({2}).item(), std::invalid_argument);
}

TEST_CASE("requires_grad allocates a zeroed gradient buffer") {
  Tensor<float> t({3});
  CHECK(t.grad() == nullptr);
  t.set_requires_grad(true);
  REQUIRE(t.grad() != nullptr);
  for (int i = 0; i < 3; ++i) CHECK(t.grad()[i] == 0.0f);
  t.grad()[1] = 2;
  t.zero_grad();
  CHECK(t.grad()[1] == 0.0f);
}

TEST_CASE("uniform requires ordered bounds, normal a nonnegative stddev") {
  Rng rng(1);
  CHECK_THROWS_AS(Tensor<float>::uniform({2}, 1.0f, -1.0f, rng), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<float>::normal({2}, 0.0f, -0.1f, rng), std::invalid_argument);
}

TEST_CASE("backward of sum gives ones") {
  Graph<double> g;
  Tensor<double> x = Tensor<double>::from({3}, {4, 5, 6});
  x.set_requires_grad(true);
  Tensor<double> loss = sum(&g, x);
  CHECK(loss.item() == 15.0);
  g.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == 1.0);
}

TEST_CASE("backward of sum of squares doubles the input") {
  Graph<double> g;
  Tensor<double> x = Tensor<double>::from({3}, {1, 2, 3});
  x.set_requires_grad(true);
  Tensor<double> loss = sum(&g, mul(&g, x, x));
  CHECK(loss.item() == 14.0);
  g.backward(loss);
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
  CHECK(x.grad()[2] == 6.0);
}

TEST_CASE("a tensor used twice accumulates both path gradients") {
  // loss = sum(x + x) against the single-use rewrite loss = sum(2x)
  Graph<double> g;
  Tensor<double> x = Tensor<double>::from({2}, {3, -1});
  x.set_requires_grad(true);
  Tensor<double> loss = sum(&g, add(&g, x, x));
  g.backward(loss);

  Graph<double> g2;
  Tensor<double> y = Tensor<double>::from({2}, {3, -1});
  y.set_requires_grad(true);
  Tensor<double> loss2 = sum(&g2, scale(&g2, y, 2.0));
  g2.backward(loss2);

  for (int i = 0; i < 2; ++i) CHECK(x.grad()[i] == y.grad()[i]);
}

TEST_CASE("backward rejects non-scalar losses and double invocation") {
  Graph<double> g;
  Tensor<double> x = Tensor<double>::from({2}, {1, 2});
  x.set_requires_grad(true);
  Tensor<double> y = add(&g, x, x);
  CHECK_THROWS_AS(g.backward(y), std::invalid_argument);

  Tensor<double> loss = sum(&g, y);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), std::logic_error);
  CHECK_THROWS_AS(sum(&g, x), std::logic_error);  // recording after backward
}

TEST_CASE("gradients do not flow into tensors that do not ask for them") {
  Graph<double> g;
  Tensor<double> x = Tensor<double>::from({2}, {1, 2});  // no grad requested
  Tensor<double> w = Tensor<double>::from({2}, {3, 4});
  w.set_requires_grad(true);
  Tensor<double> loss = sum(&g, mul(&g, x, w));
  g.backward(loss);
  CHECK(x.grad() == nullptr);
  CHECK(w.grad()[0] == 1.0);
  CHECK(w.grad()[1] == 2.0);
}
