#pragma once

#include <cstdint>

// Compute kernels. `parallel` is the OpenMP implementation used by the
// library; `serial` is the straightforward reference kept for tests and
// the benchmark. The parallel kernels split work over output elements only,
// never over a reduction axis, so results do not depend on the thread count.
namespace ssgan::kernels {

enum class Trans { No, Yes };

struct ConvGeometry {
  int64_t batch = 0;
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
  int64_t kernel = 3;
  int64_t stride = 1;
  int64_t pad = 1;

  int64_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int64_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  int64_t patch() const { return kernel * kernel * channels; }
  int64_t rows() const { return batch * out_height() * out_width(); }
};

namespace parallel {
// C[M,N] = alpha * op(A)[M,K] * op(B)[K,N] + beta * C, all row-major and dense.
template <typename T>
void gemm(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k, T alpha, const T* a, const T* b,
          T beta, T* c);

// NHWC input -> [rows, kernel*kernel*channels] patches ordered (ky, kx, c).
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols);

// Adjoint of im2col; accumulates into x.
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* x);

// Unbiased covariance out[F,F] of x[N,F] around mean[F].
void covariance(const double* x, const double* mean, int64_t n, int64_t f, double* out);
}  // namespace parallel

namespace serial {
// C[M,N] = alpha * op(A)[M,K] * op(B)[K,N] + beta * C, all row-major and dense.
template <typename T>
void gemm(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k, T alpha, const T* a, const T* b,
          T beta, T* c);

// NHWC input -> [rows, kernel*kernel*channels] patches ordered (ky, kx, c).
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols);

// Adjoint of im2col; accumulates into x.
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* x);

// Unbiased covariance out[F,F] of x[N,F] around mean[F].
void covariance(const double* x, const double* mean, int64_t n, int64_t f, double* out);
}  // namespace serial

using parallel::col2im;
using parallel::covariance;
using parallel::gemm;
using parallel::im2col;

}  // namespace ssgan::kernels
