#include "ssgan/kernels.hpp"

#include <vector>

namespace ssgan::kernels::serial {

template <typename T>
void gemm(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k, T alpha, const T* a, const T* b,
          T beta, T* c) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (int64_t p = 0; p < k; ++p) {
        const T av = ta == Trans::No ? a[i * k + p] : a[p * m + i];
        const T bv = tb == Trans::No ? b[p * n + j] : b[j * k + p];
        acc += av * bv;
      }
      c[i * n + j] = beta == T{0} ? alpha * acc : alpha * acc + beta * c[i * n + j];
    }
  }
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const int64_t ho = g.out_height(), wo = g.out_width();
  int64_t row = 0;
  for (int64_t n = 0; n < g.batch; ++n)
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox, ++row) {
        T* dst = cols + row * g.patch();
        for (int64_t ky = 0; ky < g.kernel; ++ky)
          for (int64_t kx = 0; kx < g.kernel; ++kx)
            for (int64_t ch = 0; ch < g.channels; ++ch) {
              const int64_t iy = oy * g.stride - g.pad + ky;
              const int64_t ix = ox * g.stride - g.pad + kx;
              const bool inside = iy >= 0 && iy < g.height && ix >= 0 && ix < g.width;
              *dst++ = inside ? x[((n * g.height + iy) * g.width + ix) * g.channels + ch] : T{0};
            }
      }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* x) {
  const int64_t ho = g.out_height(), wo = g.out_width();
  int64_t row = 0;
  for (int64_t n = 0; n < g.batch; ++n)
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox, ++row) {
        const T* src = cols + row * g.patch();
        for (int64_t ky = 0; ky < g.kernel; ++ky)
          for (int64_t kx = 0; kx < g.kernel; ++kx)
            for (int64_t ch = 0; ch < g.channels; ++ch, ++src) {
              const int64_t iy = oy * g.stride - g.pad + ky;
              const int64_t ix = ox * g.stride - g.pad + kx;
              if (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width)
                x[((n * g.height + iy) * g.width + ix) * g.channels + ch] += *src;
            }
      }
}

void covariance(const double* x, const double* mean, int64_t n, int64_t f, double* out) {
  std::vector<double> centered(static_cast<size_t>(n * f));
  for (int64_t r = 0; r < n; ++r)
    for (int64_t i = 0; i < f; ++i) centered[r * f + i] = x[r * f + i] - mean[i];
  const double denom = static_cast<double>(n - 1);
  for (int64_t i = 0; i < f; ++i)
    for (int64_t j = 0; j < f; ++j) {
      double acc = 0;
      for (int64_t r = 0; r < n; ++r) acc += centered[r * f + i] * centered[r * f + j];
      out[i * f + j] = acc / denom;
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

}  // namespace ssgan::kernels::serial
