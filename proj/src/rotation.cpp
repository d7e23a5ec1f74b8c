#include "ssgan/rotation.hpp"

#include <string>

namespace ssgan::rotation {

RotationPlan rotation_plan(int64_t batch_size) {
  if (batch_size <= 0 || batch_size % kNumRotations != 0)
    throw BatchSizeError("rotation batch needs a positive multiple of 4 images, got " +
                         std::to_string(batch_size));
  const int64_t quarter = batch_size / kNumRotations;
  RotationPlan plan;
  plan.rows.reserve(static_cast<size_t>(batch_size));
  plan.turns.reserve(static_cast<size_t>(batch_size));
  for (int r = 0; r < kNumRotations; ++r)
    for (int64_t i = 0; i < quarter; ++i) {
      plan.rows.push_back(i);
      plan.turns.push_back(r);
    }
  return plan;
}

template <typename T>
Tensor<T> rotate_image(const Tensor<T>& image, int turns) {
  if (image.rank() != 3) throw ShapeError("rotate_image expects [H,W,C], got " + shape_str(image.shape()));
  const int64_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h != w) throw ShapeError("rotate_image needs a square image, got " + shape_str(image.shape()));
  Tensor<T> out(image.shape());
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const auto [si, sj] = source_pixel(i, j, h, turns);
      const T* src = image.data() + (si * w + sj) * c;
      T* dst = out.data() + (i * w + j) * c;
      for (int64_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
    }
  return out;
}

template <typename T>
RotationBatch<T> make_rotation_batch(const Tensor<T>& batch, Source source) {
  if (batch.rank() != 4) throw ShapeError("rotation batch expects [N,H,W,C], got " + shape_str(batch.shape()));
  const int64_t n = batch.dim(0), h = batch.dim(1), w = batch.dim(2), c = batch.dim(3);
  if (h != w) throw ShapeError("rotation batch needs square images, got " + shape_str(batch.shape()));
  const RotationPlan plan = rotation_plan(n);
  const int64_t per_image = h * w * c;

  RotationBatch<T> out;
  out.source = source;
  out.images = Tensor<T>(batch.shape());
  out.labels.assign(plan.turns.begin(), plan.turns.end());
  for (int64_t k = 0; k < n; ++k) {
    const T* src = batch.data() + plan.rows[k] * per_image;
    T* dst = out.images.data() + k * per_image;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const auto [si, sj] = source_pixel(i, j, h, plan.turns[k]);
        for (int64_t ch = 0; ch < c; ++ch) dst[(i * w + j) * c + ch] = src[(si * w + sj) * c + ch];
      }
  }
  return out;
}

template Tensor<float> rotate_image<float>(const Tensor<float>&, int);
template Tensor<double> rotate_image<double>(const Tensor<double>&, int);
template RotationBatch<float> make_rotation_batch<float>(const Tensor<float>&, Source);
template RotationBatch<double> make_rotation_batch<double>(const Tensor<double>&, Source);

}  // namespace ssgan::rotation
