#include <omp.h>

#include <algorithm>
#include <vector>

#include "ssgan/kernels.hpp"

namespace ssgan::kernels::parallel {
namespace {

constexpr int64_t kRowBlock = 4;

template <typename T>
constexpr int64_t col_block() {
  return 64 / static_cast<int64_t>(sizeof(T)) * 4;  // 64 floats or 32 doubles
}

// Writes alpha * A[rows,K] * B[K, j0:j0+W] (+ beta * C) for a 4-row strip.
// W is a compile-time width so the accumulator tile stays in registers.
template <typename T, int64_t W>
inline void strip_full(int64_t n, int64_t k, T alpha, const T* a, const T* b, T beta, T* c,
                       int64_t j0) {
  T acc[kRowBlock][W] = {};
  const T* a0 = a;
  const T* a1 = a + k;
  const T* a2 = a + 2 * k;
  const T* a3 = a + 3 * k;
  for (int64_t p = 0; p < k; ++p) {
    const T* brow = b + p * n + j0;
    const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
#pragma omp simd
    for (int64_t j = 0; j < W; ++j) {
      acc[0][j] += v0 * brow[j];
      acc[1][j] += v1 * brow[j];
      acc[2][j] += v2 * brow[j];
      acc[3][j] += v3 * brow[j];
    }
  }
  for (int64_t r = 0; r < kRowBlock; ++r) {
    T* crow = c + r * n + j0;
    if (beta == T{0}) {
      for (int64_t j = 0; j < W; ++j) crow[j] = alpha * acc[r][j];
    } else {
      for (int64_t j = 0; j < W; ++j) crow[j] = alpha * acc[r][j] + beta * crow[j];
    }
  }
}

// Generic fallback for ragged edges: `rows` rows, `width` columns.
template <typename T>
inline void strip_tail(int64_t rows, int64_t width, int64_t n, int64_t k, T alpha, const T* a,
                       const T* b, T beta, T* c, int64_t j0) {
  std::vector<T> acc(static_cast<size_t>(width));
  for (int64_t r = 0; r < rows; ++r) {
    std::fill(acc.begin(), acc.end(), T{0});
    const T* arow = a + r * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n + j0;
#pragma omp simd
      for (int64_t j = 0; j < width; ++j) acc[j] += av * brow[j];
    }
    T* crow = c + r * n + j0;
    for (int64_t j = 0; j < width; ++j)
      crow[j] = beta == T{0} ? alpha * acc[j] : alpha * acc[j] + beta * crow[j];
  }
}

template <typename T>
std::vector<T> transpose(const T* src, int64_t rows, int64_t cols) {
  std::vector<T> dst(static_cast<size_t>(rows * cols));
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < cols; ++c)
    for (int64_t r = 0; r < rows; ++r) dst[c * rows + r] = src[r * cols + c];
  return dst;
}

}  // namespace

template <typename T>
void gemm(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k, T alpha, const T* a, const T* b,
          T beta, T* c) {
  if (m == 0 || n == 0) return;
  std::vector<T> a_buf, b_buf;
  if (ta == Trans::Yes) {
    a_buf = transpose(a, k, m);
    a = a_buf.data();
  }
  if (tb == Trans::Yes) {
    b_buf = transpose(b, n, k);
    b = b_buf.data();
  }
  constexpr int64_t W = col_block<T>();
  const int64_t full_cols = n / W * W;
  const int64_t strips = (m + kRowBlock - 1) / kRowBlock;
#pragma omp parallel
  {
    for (int64_t j0 = 0; j0 < n; j0 += W) {
      const int64_t width = std::min(W, n - j0);
#pragma omp for schedule(static)
      for (int64_t s = 0; s < strips; ++s) {
        const int64_t i0 = s * kRowBlock;
        const int64_t rows = std::min(kRowBlock, m - i0);
        if (rows == kRowBlock && j0 < full_cols)
          strip_full<T, W>(n, k, alpha, a + i0 * k, b, beta, c + i0 * n, j0);
        else
          strip_tail<T>(rows, width, n, k, alpha, a + i0 * k, b, beta, c + i0 * n, j0);
      }
    }
  }
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const int64_t ho = g.out_height(), wo = g.out_width();
  const int64_t rows = g.batch * ho * wo;
  const int64_t span = g.channels;
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < rows; ++row) {
    const int64_t n = row / (ho * wo);
    const int64_t oy = (row / wo) % ho;
    const int64_t ox = row % wo;
    T* dst = cols + row * g.patch();
    for (int64_t ky = 0; ky < g.kernel; ++ky) {
      const int64_t iy = oy * g.stride - g.pad + ky;
      for (int64_t kx = 0; kx < g.kernel; ++kx, dst += span) {
        const int64_t ix = ox * g.stride - g.pad + kx;
        if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) {
          std::fill(dst, dst + span, T{0});
        } else {
          const T* src = x + ((n * g.height + iy) * g.width + ix) * g.channels;
          std::copy(src, src + span, dst);
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* x) {
  // Parallel over images: patches of different images never overlap.
  const int64_t ho = g.out_height(), wo = g.out_width();
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < g.batch; ++n) {
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        const T* src = cols + ((n * ho + oy) * wo + ox) * g.patch();
        for (int64_t ky = 0; ky < g.kernel; ++ky) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          for (int64_t kx = 0; kx < g.kernel; ++kx, src += g.channels) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
            T* dst = x + ((n * g.height + iy) * g.width + ix) * g.channels;
#pragma omp simd
            for (int64_t ch = 0; ch < g.channels; ++ch) dst[ch] += src[ch];
          }
        }
      }
  }
}

void covariance(const double* x, const double* mean, int64_t n, int64_t f, double* out) {
  std::vector<double> centered(static_cast<size_t>(n * f));
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < n; ++r)
    for (int64_t i = 0; i < f; ++i) centered[r * f + i] = x[r * f + i] - mean[i];
  // Upper triangle, mirrored. Each entry sums over rows in index order.
  const double denom = static_cast<double>(n - 1);
#pragma omp parallel for schedule(dynamic, 4)
  for (int64_t i = 0; i < f; ++i) {
    std::vector<double> acc(static_cast<size_t>(f - i), 0.0);
    for (int64_t r = 0; r < n; ++r) {
      const double* row = centered.data() + r * f;
      const double xi = row[i];
      for (int64_t j = i; j < f; ++j) acc[j - i] += xi * row[j];
    }
    for (int64_t j = i; j < f; ++j) {
      out[i * f + j] = acc[j - i] / denom;
      out[j * f + i] = acc[j - i] / denom;
    }
  }
}

template void gemm<float>(Trans, Trans, int64_t, int64_t, int64_t, float, const float*,
                          const float*, float, float*);
template void gemm<double>(Trans, Trans, int64_t, int64_t, int64_t, double, const double*,
                           const double*, double, double*);
template void im2col<float>(const ConvGeometry&, const float*, float*);
template void im2col<double>(const ConvGeometry&, const double*, double*);
template void col2im<float>(const ConvGeometry&, const float*, float*);
template void col2im<double>(const ConvGeometry&, const double*, double*);

}  // namespace ssgan::kernels::parallel
