#include "coordconv/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "coordconv/rng.hpp"

namespace coordconv {

Dataset Dataset::generate() {
  Dataset ds;
  ds.examples_.reserve(kNumExamples);
  for (int y = kCenterMin; y <= kCenterMax; ++y)
    for (int x = kCenterMin; x <= kCenterMax; ++x) {
      Example e;
      e.x = static_cast<uint8_t>(x);
      e.y = static_cast<uint8_t>(y);
      Example::set_bit(e.onehot, y, x);
      int half = kSquare / 2;
      for (int r = y - half; r <= y + half; ++r)
        for (int c = x - half; c <= x + half; ++c) Example::set_bit(e.image, r, c);
      ds.examples_.push_back(e);
    }
  return ds;
}

Split make_split(SplitKind kind, uint32_t seed) {
  Split s;
  s.kind = kind;
  s.seed = seed;
  if (kind == SplitKind::uniform) {
    std::vector<uint16_t> idx(kNumExamples);
    std::iota(idx.begin(), idx.end(), uint16_t(0));
    Rng rng = Rng(seed).stream(kStreamSplit);
    rng.shuffle(idx.begin(), idx.end());
    s.train.assign(idx.begin(), idx.begin() + kUniformTrainCount);
    s.test.assign(idx.begin() + kUniformTrainCount, idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
  } else {
    for (int i = 0; i < kNumExamples; ++i) {
      int y = kCenterMin + i / kCenterGrid;
      int x = kCenterMin + i % kCenterGrid;
      if (x >= kQuadrantBoundary && y >= kQuadrantBoundary)
        s.test.push_back(static_cast<uint16_t>(i));
      else
        s.train.push_back(static_cast<uint16_t>(i));
    }
  }
  return s;
}

namespace {

void accumulate(const Dataset& ds, const std::vector<uint16_t>& idx, bool image,
                std::vector<double>& acc) {
  for (uint16_t i : idx) {
    const Example& e = ds[i];
    for (int row = 0; row < kCanvas; ++row)
      for (int col = 0; col < kCanvas; ++col) {
        bool v = image ? e.image_at(row, col) : e.onehot_at(row, col);
        if (v) acc[static_cast<size_t>(row * kCanvas + col)] += 1.0;
      }
  }
}

std::vector<float> normalized(const std::vector<double>& acc) {
  double lo = acc[0], hi = acc[0];
  for (double v : acc) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<float> out(acc.size(), 0.0f);
  if (hi > lo)
    for (size_t i = 0; i < acc.size(); ++i)
      out[i] = static_cast<float>((acc[i] - lo) / (hi - lo));
  return out;
}

}  // namespace

SumImages split_sum_images(const Dataset& ds, const Split& split) {
  SumImages s;
  std::vector<double> acc(kCanvas * kCanvas);
  auto run = [&](const std::vector<uint16_t>& idx, bool image) {
    std::fill(acc.begin(), acc.end(), 0.0);
    accumulate(ds, idx, image, acc);
    return normalized(acc);
  };
  s.train_onehot = run(split.train, false);
  s.train_image = run(split.train, true);
  s.test_onehot = run(split.test, false);
  s.test_image = run(split.test, true);
  return s;
}

}  // namespace coordconv
