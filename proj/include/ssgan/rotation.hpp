#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan::rotation {

inline constexpr int kNumRotations = 4;

// The self-supervision label set: label r is r counter-clockwise quarter turns.
struct RotationSet {
  static constexpr std::array<int, kNumRotations> degrees{0, 90, 180, 270};
  static constexpr std::array<int, kNumRotations> labels{0, 1, 2, 3};
};

enum class Source { Real, Fake };

class BatchSizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct RotationBatch {
  Tensor<T> images;  // [N, H, W, C]
  std::vector<int32_t> labels;
  Source source = Source::Real;
};

// Input pixel that lands on output pixel (i, j) of a size x size image after
// `turns` counter-clockwise quarter turns.
inline std::pair<int64_t, int64_t> source_pixel(int64_t i, int64_t j, int64_t size, int turns) {
  switch (turns & 3) {
    case 0: return {i, j};
    case 1: return {j, size - 1 - i};
    case 2: return {size - 1 - i, size - 1 - j};
    default: return {size - 1 - j, i};
  }
}

// Which input rows feed a rotation batch and how far each is turned. The first
// N/4 images each appear four times, grouped by rotation label.
struct RotationPlan {
  std::vector<int64_t> rows;
  std::vector<int> turns;
};

RotationPlan rotation_plan(int64_t batch_size);

// image: [H, W, C] with H == W.
template <typename T>
Tensor<T> rotate_image(const Tensor<T>& image, int turns);

// batch: [N, H, W, C] with N % 4 == 0.
template <typename T>
RotationBatch<T> make_rotation_batch(const Tensor<T>& batch, Source source);

}  // namespace ssgan::rotation
