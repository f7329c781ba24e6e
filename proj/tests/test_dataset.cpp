#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "coordconv/dataset.hpp"
#include "oracles.hpp"

using namespace coordconv;

namespace {

const Dataset& dataset() {
  static Dataset ds = Dataset::generate();
  return ds;
}

}  // namespace

TEST_CASE("the dataset holds one example per center of the 56x56 grid, row-major") {
  const Dataset& ds = dataset();
  REQUIRE(ds.size() == 3136);
  for (int i = 0; i < 3136; ++i) {
    CHECK(ds[static_cast<size_t>(i)].x == kCenterMin + i % 56);
    CHECK(ds[static_cast<size_t>(i)].y == kCenterMin + i / 56);
  }
}

TEST_CASE("each onehot has a single bit at (y,x) and each image exactly 81") {
  const Dataset& ds = dataset();
  for (const Example& e : ds.examples()) {
    int onehot_sum = 0, image_sum = 0;
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        onehot_sum += e.onehot_at(r, c);
        image_sum += e.image_at(r, c);
      }
    REQUIRE(onehot_sum == 1);
    REQUIRE(image_sum == 81);
    REQUIRE(e.onehot_at(e.y, e.x));
  }
}

TEST_CASE("the corner example paints rows 0..8 by cols 0..8") {
  const Example& e = dataset()[0];
  REQUIRE(e.x == 4);
  REQUIRE(e.y == 4);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      REQUIRE(e.image_at(r, c) == (r <= 8 && c <= 8));
}

TEST_CASE("every image equals the 9x9 ones-kernel convolution of its onehot") {
  const Dataset& ds = dataset();
  Tensor<float> kernel({9, 9, 1, 1}, 1.0f);
  Tensor<float> onehot({1, 64, 64, 1});
  for (const Example& e : ds.examples()) {
    e.write_onehot(onehot.data());
    Tensor<float> painted = oracle::conv2d_direct(onehot, kernel, {}, 1, Padding::same);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c)
        REQUIRE(painted.data()[r * 64 + c] == (e.image_at(r, c) ? 1.0f : 0.0f));
  }
}

TEST_CASE("the uniform split is a seeded disjoint 2509/627 cover, sorted") {
  Split s = make_split(SplitKind::uniform, 42);
  REQUIRE(s.train.size() == 2509);
  REQUIRE(s.test.size() == 627);
  CHECK(s.kind == SplitKind::uniform);
  CHECK(s.seed == 42);
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
  CHECK(std::is_sorted(s.test.begin(), s.test.end()));

  std::set<uint16_t> all(s.train.begin(), s.train.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 3136);
  CHECK(*all.rbegin() == 3135);

  Split again = make_split(SplitKind::uniform, 42);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  Split other = make_split(SplitKind::uniform, 43);
  CHECK(other.train != s.train);
}

TEST_CASE("the quadrant split holds out exactly the x>=32, y>=32 centers") {
  Split s = make_split(SplitKind::quadrant, 0);
  REQUIRE(s.train.size() == 2352);
  REQUIRE(s.test.size() == 784);
  const Dataset& ds = dataset();
  for (uint16_t i : s.test) {
    REQUIRE(ds[i].x >= 32);
    REQUIRE(ds[i].y >= 32);
  }
  for (uint16_t i : s.train) REQUIRE((ds[i].x < 32 || ds[i].y < 32));
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
  // seed does not matter for the quadrant split
  Split s2 = make_split(SplitKind::quadrant, 99);
  CHECK(s2.test == s.test);
}

TEST_CASE("uniform test centers sit close to train centers") {
  // at least 99% of test centers have a train center within Chebyshev distance 2
  const Dataset& ds = dataset();
  for (uint32_t seed : {1u, 7u, 2024u}) {
    Split s = make_split(SplitKind::uniform, seed);
    std::vector<bool> is_train(3136, false);
    for (uint16_t i : s.train) is_train[i] = true;
    int close = 0;
    for (uint16_t i : s.test) {
      int x = ds[i].x, y = ds[i].y;
      bool found = false;
      for (int dy = -2; dy <= 2 && !found; ++dy)
        for (int dx = -2; dx <= 2 && !found; ++dx) {
          int nx = x + dx, ny = y + dy;
          if (nx < kCenterMin || nx > kCenterMax || ny < kCenterMin || ny > kCenterMax) continue;
          if (is_train[static_cast<size_t>((ny - 4) * 56 + (nx - 4))]) found = true;
        }
      close += found;
    }
    CAPTURE(seed);
    CHECK(static_cast<double>(close) / 627.0 >= 0.99);
  }
}

TEST_CASE("quadrant sum images confine the test mass to the held-out quadrant") {
  const Dataset& ds = dataset();
  Split s = make_split(SplitKind::quadrant, 0);
  SumImages sums = split_sum_images(ds, s);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      float v = sums.test_onehot[static_cast<size_t>(r * 64 + c)];
      bool held_out = r >= 32 && r <= kCenterMax && c >= 32 && c <= kCenterMax;
      REQUIRE(v == (held_out ? 1.0f : 0.0f));  // each center occurs once, so min-max leaves 0/1
    }
}

TEST_CASE("uniform train onehot sum covers every center except the test ones") {
  const Dataset& ds = dataset();
  Split s = make_split(SplitKind::uniform, 5);
  SumImages sums = split_sum_images(ds, s);
  std::vector<bool> is_test(3136, false);
  for (uint16_t i : s.test) is_test[i] = true;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      float v = sums.train_onehot[static_cast<size_t>(r * 64 + c)];
      bool center = r >= kCenterMin && r <= kCenterMax && c >= kCenterMin && c <= kCenterMax;
      bool expected = center && !is_test[static_cast<size_t>((r - 4) * 56 + (c - 4))];
      REQUIRE(v == (expected ? 1.0f : 0.0f));
    }
}

TEST_CASE("the full-set image sum peaks in the interior where 81 squares overlap") {
  const Dataset& ds = dataset();
  Split full;
  full.train.resize(3136);
  for (int i = 0; i < 3136; ++i) full.train[static_cast<size_t>(i)] = static_cast<uint16_t>(i);
  full.test.push_back(0);  // sums are per subset; a dummy test side is fine
  SumImages sums = split_sum_images(ds, full);
  // normalized: interior pixels reach the max (81 overlapping squares -> 1.0)
  CHECK(sums.train_image[32 * 64 + 32] == 1.0f);
  CHECK(sums.train_image[8 * 64 + 8] == 1.0f);      // first fully-covered pixel
  CHECK(sums.train_image[0] < 0.1f);                 // corners see a single square
  float mx = 0;
  for (float v : sums.train_image) mx = std::max(mx, v);
  CHECK(mx == 1.0f);
}

TEST_CASE("normalized coordinates span [-1,1] over the canvas") {
  CHECK(norm_coord<float>(0) == -1.0f);
  CHECK(norm_coord<float>(63) == 1.0f);
  CHECK(norm_coord<double>(32) == doctest::Approx(2.0 * 32 / 63 - 1));
}
