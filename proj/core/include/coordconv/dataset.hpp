#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "coordconv/tensor.hpp"

namespace coordconv {

inline constexpr int kCanvas = 64;        // canvas is kCanvas x kCanvas
inline constexpr int kSquare = 9;         // painted squares are kSquare x kSquare
inline constexpr int kCenterMin = 4;      // keeps the full square on the canvas
inline constexpr int kCenterMax = 59;
inline constexpr int kCenterGrid = 56;    // kCenterMax - kCenterMin + 1
inline constexpr int kNumExamples = kCenterGrid * kCenterGrid;  // 3136

// One square-on-canvas example. x is the column of the center, y the row.
// onehot marks the center pixel; image is the painted 9x9 square. Both maps
// are bit-packed: pixel p = row*64 + col lives in byte p>>3, bit p&7
// (LSB first) — the same packing the dataset file uses.
struct Example {
  uint8_t x = 0, y = 0;
  std::array<uint8_t, 512> onehot{};
  std::array<uint8_t, 512> image{};

  bool onehot_at(int row, int col) const { return bit(onehot, row, col); }
  bool image_at(int row, int col) const { return bit(image, row, col); }

  template <class T>
  void write_onehot(T* dst) const {
    unpack(onehot, dst);
  }
  template <class T>
  void write_image(T* dst) const {
    unpack(image, dst);
  }

  static bool bit(const std::array<uint8_t, 512>& bits, int row, int col) {
    int p = row * kCanvas + col;
    return (bits[static_cast<size_t>(p >> 3)] >> (p & 7)) & 1;
  }
  static void set_bit(std::array<uint8_t, 512>& bits, int row, int col) {
    int p = row * kCanvas + col;
    bits[static_cast<size_t>(p >> 3)] |= static_cast<uint8_t>(1u << (p & 7));
  }

 private:
  template <class T>
  static void unpack(const std::array<uint8_t, 512>& bits, T* dst) {
    for (int p = 0; p < kCanvas * kCanvas; ++p)
      dst[p] = static_cast<T>((bits[static_cast<size_t>(p >> 3)] >> (p & 7)) & 1);
  }
};

// All 3136 examples, one per center, enumerated row-major by (y, x):
// index = (y - 4)*56 + (x - 4).
class Dataset {
 public:
  static Dataset generate();
  static Dataset from_examples(std::vector<Example> examples) {
    Dataset ds;
    ds.examples_ = std::move(examples);
    return ds;
  }

  const std::vector<Example>& examples() const { return examples_; }
  const Example& operator[](size_t i) const { return examples_[i]; }
  size_t size() const { return examples_.size(); }

 private:
  std::vector<Example> examples_;
};

enum class SplitKind : uint8_t { uniform = 0, quadrant = 1 };

// Index lists are stored sorted ascending; the seed only decides membership.
struct Split {
  SplitKind kind = SplitKind::uniform;
  uint32_t seed = 0;
  std::vector<uint16_t> train, test;
};

inline constexpr int kUniformTrainCount = 2509;  // round(0.8 * 3136)
inline constexpr int kQuadrantBoundary = 32;     // test: x >= 32 and y >= 32

Split make_split(SplitKind kind, uint32_t seed);

// Per-pixel sums over a subset, min-max normalized to [0,1] (all-equal maps
// normalize to zero). Each map is 64*64 row-major.
struct SumImages {
  std::vector<float> train_onehot, train_image, test_onehot, test_image;
};
SumImages split_sum_images(const Dataset& ds, const Split& split);

// Normalized coordinate used as regression target and coordinate input:
// pixel p in [0,63] -> 2*p/63 - 1.
template <class T>
T norm_coord(int p) {
  return static_cast<T>(2.0 * p / (kCanvas - 1) - 1.0);
}

}  // namespace coordconv
