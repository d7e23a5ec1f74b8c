#pragma once

#include <cmath>
#include <cstdint>

#include "ssgan/tensor.hpp"

// Elementwise helpers on plain tensors (no graph).
namespace ssgan::math {

inline void check_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
void add_inplace(Tensor<T>& into, const Tensor<T>& x) {
  check_same(into.shape(), x.shape(), "add_inplace");
  T* d = into.data();
  const T* s = x.data();
  const int64_t n = into.size();
#pragma omp parallel for simd schedule(static) if (n > 32768)
  for (int64_t i = 0; i < n; ++i) d[i] += s[i];
}

template <typename T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
  check_same(x.shape(), y.shape(), "axpy");
  T* d = y.data();
  const T* s = x.data();
  const int64_t n = y.size();
#pragma omp parallel for simd schedule(static) if (n > 32768)
  for (int64_t i = 0; i < n; ++i) d[i] += alpha * s[i];
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& x, T s) {
  Tensor<T> out(x.shape());
  const int64_t n = x.size();
#pragma omp parallel for simd schedule(static) if (n > 32768)
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] * s;
  return out;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  check_same(a.shape(), b.shape(), "hadamard");
  Tensor<T> out(a.shape());
  const int64_t n = a.size();
#pragma omp parallel for simd schedule(static) if (n > 32768)
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
double sum(const Tensor<T>& x) {
  double acc = 0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x[i];
  return acc;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  check_same(a.shape(), b.shape(), "dot");
  double acc = 0;
  for (int64_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

template <typename T>
double l2_norm(const Tensor<T>& x) {
  return std::sqrt(dot(x, x));
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  for (int64_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace ssgan::math
