// Microbenchmarks for the kernels that dominate experiment wall time, at the
// shapes the experiments actually use (64x64 canvas, batch 16).

#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "coordconv/graph.hpp"
#include "coordconv/models.hpp"
#include "coordconv/ops.hpp"
#include "coordconv/tensor.hpp"
#include "coordconv/train.hpp"

namespace {

using namespace coordconv;

Tensor<float> random_tensor(Shape shape, uint32_t seed, float scale = 0.1f) {
  Tensor<float> t(std::move(shape), 0.0f);
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-scale, scale);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(gen);
  return t;
}

// 3x3 same-padded convolution on a full-resolution feature map, inference.
void BM_Conv2dForward(benchmark::State& state) {
  const int64_t c = state.range(0);
  Tensor<float> x = random_tensor({16, 64, 64, c}, 1);
  Tensor<float> w = random_tensor({3, 3, c, c}, 2);
  Tensor<float> b = random_tensor({c}, 3);
  ConvSpec spec{3, 1};
  for (auto _ : state) {
    Tensor<float> y = conv2d<float>(nullptr, x, w, b, spec);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

// The same convolution recorded on a tape and differentiated.
void BM_Conv2dTrainStep(benchmark::State& state) {
  const int64_t c = state.range(0);
  Tensor<float> x = random_tensor({16, 64, 64, c}, 1);
  Tensor<float> w = random_tensor({3, 3, c, c}, 2);
  Tensor<float> b = random_tensor({c}, 3);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  ConvSpec spec{3, 1};
  for (auto _ : state) {
    w.zero_grad();
    b.zero_grad();
    Graph<float> g;
    Tensor<float> y = conv2d(&g, x, w, b, spec);
    Tensor<float> loss = sum(&g, y);
    g.backward(loss);
    benchmark::DoNotOptimize(w.grad());
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv2dTrainStep)->Arg(8)->Unit(benchmark::kMillisecond);

// Strided transposed convolution doubling an 8x8 map, the upsampling step of
// the deconv families.
void BM_Conv2dTransposeForward(benchmark::State& state) {
  Tensor<float> x = random_tensor({16, 8, 8, 64}, 1);
  Tensor<float> w = random_tensor({2, 2, 32, 64}, 2);
  Tensor<float> b = random_tensor({32}, 3);
  ConvSpec spec{2, 2};
  for (auto _ : state) {
    Tensor<float> y = conv2d_transpose<float>(nullptr, x, w, b, spec);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv2dTransposeForward)->Unit(benchmark::kMillisecond);

// Fully-connected layer at the flattened-feature shape of the regression nets.
void BM_DenseForward(benchmark::State& state) {
  Tensor<float> x = random_tensor({16, 1024}, 1);
  Tensor<float> w = random_tensor({1024, 64}, 2);
  Tensor<float> b = random_tensor({64}, 3);
  for (auto _ : state) {
    Tensor<float> y = dense<float>(nullptr, x, w, b);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 16 * 1024 * 64);
}
BENCHMARK(BM_DenseForward)->Unit(benchmark::kMillisecond);

// Coordinate-channel concatenation alone.
void BM_AddCoords(benchmark::State& state) {
  Tensor<float> x = random_tensor({16, 64, 64, 8}, 1);
  CoordSpec coords{state.range(0) != 0};
  for (auto _ : state) {
    Tensor<float> y = add_coords<float>(nullptr, x, coords);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_AddCoords)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// coord_conv via the fused path (coordinate contribution computed once and
// broadcast) versus materializing the concatenated input.
void BM_CoordConv(benchmark::State& state) {
  Tensor<float> x = random_tensor({16, 64, 64, 8}, 1);
  Tensor<float> w = random_tensor({3, 3, 10, 8}, 2);
  Tensor<float> b = random_tensor({8}, 3);
  ConvSpec spec{3, 1};
  CoordSpec coords{};
  const bool fused = state.range(0) != 0;
  for (auto _ : state) {
    Tensor<float> y = coord_conv<float>(nullptr, x, w, b, spec, coords, fused);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_CoordConv)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

// One full optimizer step of the coordinate classifier: forward, loss,
// backward, Adam update. This is the unit the per-epoch timings are made of.
void BM_TrainStepClassifier(benchmark::State& state) {
  Architecture arch = build_architecture("CC-CLS");
  Model<float> model(arch, 1);
  // The classifier reads the target coordinates tiled across the canvas.
  Tensor<float> input = random_tensor({16, 64, 64, 2}, 7, 1.0f);
  std::vector<int> targets(16);
  std::mt19937 gen(9);
  for (int& t : targets) t = static_cast<int>(gen() % 4096);
  TrainConfig config;
  AdamState<float> adam;
  std::vector<Tensor<float>*> params = model.parameters();
  for (auto _ : state) {
    for (Tensor<float>* p : params) p->zero_grad();
    Graph<float> g;
    Tensor<float> logits = model.forward(&g, input, true);
    Tensor<float> loss = softmax_xent(&g, logits, targets);
    g.backward(loss);
    adam_step(params, adam, config, config.lr);
    benchmark::DoNotOptimize(params.front()->data());
  }
}
BENCHMARK(BM_TrainStepClassifier)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
