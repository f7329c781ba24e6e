// Built-in checks: PRNG reference outputs, convolution against a direct
// summation oracle, the conv/transpose adjoint identity, the zeroed-weight
// equivalence of the coordinate conv, parameter-count formulas, dataset
// painting and split counts, finite-difference gradient checks, and a
// determinism micro-train whose metrics CSV must reproduce byte-for-byte.
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "common.hpp"
#include "coordconv/dataset.hpp"
#include "coordconv/gradcheck.hpp"
#include "coordconv/graph.hpp"
#include "coordconv/io.hpp"
#include "coordconv/models.hpp"
#include "coordconv/ops.hpp"
#include "coordconv/rng.hpp"
#include "coordconv/train.hpp"

namespace lab {

using namespace coordconv;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& name, const std::string& detail = "") {
  if (ok) {
    std::printf("[ok]   %s\n", name.c_str());
  } else {
    ++g_failures;
    std::printf("[FAIL] %s%s%s\n", name.c_str(), detail.empty() ? "" : ": ", detail.c_str());
  }
  std::fflush(stdout);
}

Tensor<double> random_tensor(Shape shape, std::mt19937& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t{std::move(shape)};
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = dist(gen);
  return t;
}

Tensor<float> random_tensor_f32(Shape shape, std::mt19937& gen) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor<float> t{std::move(shape)};
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(dist(gen));
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// Direct quadruple-loop cross-correlation, independent of the im2col path.
Tensor<double> conv2d_direct(const Tensor<double>& x, const Tensor<double>& w, int64_t stride,
                             Padding padding) {
  int64_t n = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], c = x.shape()[3];
  int64_t k = w.shape()[0], co = w.shape()[3];
  auto pad_axis = [&](int64_t in) {
    if (padding == Padding::same) {
      int64_t out = (in + stride - 1) / stride;
      int64_t total = std::max<int64_t>(0, (out - 1) * stride + k - in);
      return std::pair<int64_t, int64_t>{out, total / 2};
    }
    return std::pair<int64_t, int64_t>{(in - k) / stride + 1, 0};
  };
  auto [oh, ph] = pad_axis(h);
  auto [ow, pw] = pad_axis(wd);
  Tensor<double> y({n, oh, ow, co});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox)
        for (int64_t f = 0; f < co; ++f) {
          double acc = 0;
          for (int64_t ky = 0; ky < k; ++ky)
            for (int64_t kx = 0; kx < k; ++kx) {
              int64_t iy = oy * stride + ky - ph;
              int64_t ix = ox * stride + kx - pw;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              for (int64_t ci = 0; ci < c; ++ci)
                acc += x.data()[((b * h + iy) * wd + ix) * c + ci] *
                       w.data()[((ky * k + kx) * c + ci) * co + f];
            }
          y.data()[((b * oh + oy) * ow + ox) * co + f] = acc;
        }
  return y;
}

// ---- individual checks ----

void check_rng() {
  const uint64_t expect[4] = {0xe220a8397b1dcdafull, 0x6e789e6aa1b965f4ull, 0x06c45d188009454full,
                              0xf88bb8a8724c81ecull};
  Rng rng(0);
  bool ok = true;
  for (uint64_t e : expect) ok = ok && rng.next_u64() == e;
  check(ok, "prng matches its published reference outputs");
}

void check_conv_oracle() {
  std::mt19937 gen(101);
  struct Case {
    int64_t n, h, w, c, k, co, stride;
    Padding padding;
  } cases[] = {
      {1, 5, 5, 1, 3, 2, 1, Padding::same},  {2, 6, 7, 3, 3, 2, 2, Padding::same},
      {1, 8, 8, 2, 5, 3, 1, Padding::same},  {1, 9, 9, 2, 1, 4, 1, Padding::same},
      {2, 7, 7, 2, 3, 3, 1, Padding::valid}, {1, 10, 6, 1, 2, 2, 2, Padding::same},
  };
  double worst = 0;
  for (const Case& cs : cases) {
    Tensor<double> x = random_tensor({cs.n, cs.h, cs.w, cs.c}, gen);
    Tensor<double> w = random_tensor({cs.k, cs.k, cs.c, cs.co}, gen);
    ConvSpec spec{static_cast<int>(cs.k), static_cast<int>(cs.stride), cs.padding, 0, 0, false};
    Tensor<double> got = conv2d<double>(nullptr, x, w, {}, spec);
    Tensor<double> want = conv2d_direct(x, w, cs.stride, cs.padding);
    for (int64_t i = 0; i < got.numel(); ++i) {
      double a = got.data()[i], b = want.data()[i];
      worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}));
    }
  }
  check(worst < 1e-5, "conv2d matches the direct-summation oracle",
        "max rel diff " + std::to_string(worst));
}

void check_adjoint() {
  std::mt19937 gen(102);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int64_t> kd(1, 4), sd(1, 3), cd(1, 3), hd(2, 5);
    int64_t k = kd(gen), s = sd(gen), c = cd(gen), co = cd(gen), hs = hd(gen), ws = hd(gen);
    Tensor<double> x = random_tensor({1, hs, ws, c}, gen);
    Tensor<double> y = random_tensor({1, hs * s, ws * s, co}, gen);
    Tensor<double> w = random_tensor({k, k, co, c}, gen);
    ConvSpec spec{static_cast<int>(k), static_cast<int>(s), Padding::same, 0, 0, false};
    Tensor<double> up = conv2d_transpose<double>(nullptr, x, w, {}, spec);
    Tensor<double> down = conv2d<double>(nullptr, y, w, {}, spec);
    double lhs = dot(down, x), rhs = dot(y, up);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-8}));
  }
  check(worst < 1e-5, "conv2d and conv2d_transpose are adjoint",
        "max rel diff " + std::to_string(worst));
}

void check_coord_identity() {
  std::mt19937 gen(103);
  bool ok = true;
  for (int trial = 0; trial < 25 && ok; ++trial) {
    std::uniform_int_distribution<int64_t> hd(4, 12), cd(1, 4), kd(1, 5), sd(1, 2);
    int64_t h = hd(gen), wd = hd(gen), c = cd(gen), co = cd(gen), k = kd(gen), s = sd(gen);
    CoordSpec coords{trial % 3 == 0};
    int64_t d = coords.extra_channels();
    Tensor<float> x = random_tensor_f32({2, h, wd, c}, gen);
    Tensor<float> w = random_tensor_f32({k, k, c + d, co}, gen);
    Tensor<float> bias = random_tensor_f32({co}, gen);
    // zero the coordinate rows; copy out the data rows for the plain conv
    Tensor<float> wdata({k, k, c, co});
    for (int64_t t = 0; t < k * k; ++t) {
      std::memcpy(wdata.data() + t * c * co, w.data() + t * (c + d) * co,
                  static_cast<size_t>(c * co) * sizeof(float));
      std::memset(w.data() + (t * (c + d) + c) * co, 0,
                  static_cast<size_t>(d * co) * sizeof(float));
    }
    ConvSpec spec{static_cast<int>(k), static_cast<int>(s)};
    Tensor<float> via = coord_conv<float>(nullptr, x, w, bias, spec, coords);
    Tensor<float> plain = conv2d<float>(nullptr, x, wdata, bias, spec);
    ok = via.shape() == plain.shape() &&
         std::memcmp(via.data(), plain.data(), static_cast<size_t>(plain.numel()) * 4) == 0;
  }
  check(ok, "coordinate conv with zeroed coordinate weights is bit-identical to conv2d");
}

void check_param_formula() {
  bool ok = param_count(build_architecture("CC-CLS")) == 7553 &&
            param_count(build_architecture("CC-REG")) == 906;
  // adding the radial channel must add exactly k^2 * c_out per coordinate conv
  for (const char* fam : {"CC-CLS", "CC-REG", "CC-REN"}) {
    Architecture flat = build_architecture(fam, BuildHyper{2, 1, false});
    Architecture with_r = build_architecture(fam, BuildHyper{2, 1, true});
    int64_t expect = 0;
    for (const LayerSpec& l : flat.layers)
      if (l.kind == LayerKind::coordconv)
        expect += static_cast<int64_t>(l.k) * l.k * l.c_out;
    ok = ok && (param_count(with_r) - param_count(flat) == expect);
  }
  check(ok, "parameter counts match the closed-form layer formulas");
}

void check_dataset() {
  Dataset ds = Dataset::generate();
  Split uni = make_split(SplitKind::uniform, 1);
  Split quad = make_split(SplitKind::quadrant, 1);
  bool counts = ds.size() == 3136 && uni.train.size() == 2509 && uni.test.size() == 627 &&
                quad.train.size() == 2352 && quad.test.size() == 784;
  check(counts, "dataset and split counts are exact");

  // painting oracle on a sample: image == onehot convolved with a 9x9 ones
  // kernel, computed by brute-force window sums
  bool paint = true;
  for (size_t i = 0; i < ds.size() && paint; i += 13) {
    const Example& ex = ds[i];
    for (int row = 0; row < kCanvas && paint; ++row)
      for (int col = 0; col < kCanvas && paint; ++col) {
        int acc = 0;
        for (int dy = -4; dy <= 4; ++dy)
          for (int dx = -4; dx <= 4; ++dx) {
            int r = row + dy, c = col + dx;
            if (r < 0 || r >= kCanvas || c < 0 || c >= kCanvas) continue;
            acc += ex.onehot_at(r, c) ? 1 : 0;
          }
        paint = (ex.image_at(row, col) ? 1 : 0) == acc;
      }
  }
  check(paint, "painted squares equal the ones-kernel convolution of the center maps");
}

void check_gradients() {
  using Fn = std::function<Tensor<double>(Graph<double>*, Tensor<double>&)>;
  // random-weighted sum: a plain sum has identically-zero gradients for
  // symmetric coordinate rows and all batch-norm training gradients
  auto weighted = [](std::function<Tensor<double>(Graph<double>*, Tensor<double>&)> op,
                     uint32_t seed) -> Fn {
    return [op = std::move(op), seed](Graph<double>* g, Tensor<double>& x) {
      Tensor<double> y = op(g, x);
      std::mt19937 wgen(seed);
      std::uniform_real_distribution<double> dist(0.25, 1.75);
      Tensor<double> r(y.shape());
      for (int64_t i = 0; i < r.numel(); ++i) r.data()[i] = dist(wgen);
      return sum(g, mul(g, y, r));
    };
  };

  std::mt19937 gen(104);
  double worst = 0;
  auto run = [&](const Fn& f, const Tensor<double>& x) {
    worst = std::max(worst, static_cast<double>(finite_diff_check<double>(f, x)));
  };

  Tensor<double> w33 = random_tensor({3, 3, 2, 2}, gen);
  Tensor<double> x = random_tensor({2, 5, 5, 2}, gen);
  run(weighted([&](Graph<double>* g, Tensor<double>& v) {
        return conv2d(g, v, w33, {}, ConvSpec{3, 1, Padding::same, 0, 0, false});
      }, 11),
      x);
  run(weighted([&](Graph<double>* g, Tensor<double>& v) {
        return conv2d(g, x, v, {}, ConvSpec{3, 1, Padding::same, 0, 0, false});
      }, 12),
      w33);

  Tensor<double> wt = random_tensor({2, 2, 3, 2}, gen);
  run(weighted([&](Graph<double>* g, Tensor<double>& v) {
        return conv2d_transpose(g, v, wt, {}, ConvSpec{2, 2, Padding::same, 0, 0, false});
      }, 13),
      x);

  Tensor<double> wc = random_tensor({3, 3, 4, 2}, gen);
  run(weighted([&](Graph<double>* g, Tensor<double>& v) {
        return coord_conv(g, v, wc, {}, ConvSpec{3, 1, Padding::same, 0, 0, false}, CoordSpec{});
      }, 14),
      x);
  run(weighted([&](Graph<double>* g, Tensor<double>& v) {
        return coord_conv(g, x, v, {}, ConvSpec{3, 1, Padding::same, 0, 0, false}, CoordSpec{});
      }, 15),
      wc);

  run(weighted([&](Graph<double>* g, Tensor<double>& v) {
        auto st = BatchNormState<double>::make(2);
        return batch_norm(g, v, st, true);
      }, 16),
      x);

  Tensor<double> dw = random_tensor({6, 4}, gen);
  Tensor<double> dx = random_tensor({3, 6}, gen);
  run(weighted([&](Graph<double>* g, Tensor<double>& v) { return dense(g, v, dw, {}); }, 17), dx);

  check(worst < 1e-6, "gradients match central differences",
        "max rel err " + std::to_string(worst));
}

std::string micro_train_csv(uint64_t seed) {
  Dataset ds = Dataset::generate();
  Split uni = make_split(SplitKind::uniform, 1);
  Split tiny;
  tiny.kind = SplitKind::uniform;
  tiny.seed = uni.seed;
  tiny.train.assign(uni.train.begin(), uni.train.begin() + 96);
  tiny.test.assign(uni.test.begin(), uni.test.begin() + 32);

  TrainConfig config;
  config.lr = 0.01;
  config.batch_size = 32;
  config.epochs = 3;
  config.seed = seed;
  Architecture arch = build_architecture("CC-REG");
  TrainRun run = train_task(Task::reg, arch, ds, tiny, config);
  return metrics_csv(run.result.history, /*zero_wall=*/true);
}

}  // namespace

int cmd_selftest(const std::string& out_dir, uint64_t seed) {
  check_rng();
  check_conv_oracle();
  check_adjoint();
  check_coord_identity();
  check_param_formula();
  check_dataset();
  check_gradients();

  std::string first = micro_train_csv(seed);
  std::string second = micro_train_csv(seed);
  check(first == second, "training twice from one seed reproduces the metrics byte-for-byte");

  ensure_dir(out_dir);
  write_text_file(join_path(out_dir, "selftest_metrics.csv"), first);
  std::printf("wrote %s\n", join_path(out_dir, "selftest_metrics.csv").c_str());

  if (g_failures > 0) {
    std::printf("%d check(s) failed\n", g_failures);
    return kExitSelftest;
  }
  std::printf("all checks passed\n");
  return kExitOk;
}

}  // namespace lab
