#include "ssgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ssgan/kernels.hpp"
#include "ssgan/rotation.hpp"
#include "ssgan/tensor_math.hpp"

namespace ssgan::ops {
namespace {

using kernels::Trans;

template <typename T>
using Grads = std::vector<Tensor<T>>;

template <typename T>
bool needs(const ag::Node<T>& n, size_t i) {
  return n.parents[i]->requires_grad;
}

template <typename T>
const Tensor<T>& in(const ag::Node<T>& n, size_t i) {
  return n.parents[i]->value;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  const int64_t n = x.size();
#pragma omp parallel for schedule(static) if (n > 32768)
  for (int64_t i = 0; i < n; ++i) out[i] = f(x[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
  Tensor<T> out(a.shape());
  const int64_t n = a.size();
#pragma omp parallel for schedule(static) if (n > 32768)
  for (int64_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  return out;
}

// Rows of a conv input processed per GEMM call; bounds the im2col buffer.
constexpr int64_t kIm2colBudget = 1 << 22;

}  // namespace

template <typename T>
V<T> add(const V<T>& a, const V<T>& b) {
  math::check_same(a.shape(), b.shape(), "add");
  return V<T>::from_op(zip(a.value(), b.value(), [](T x, T y) { return x + y; }), {a, b},
                       [](const ag::Node<T>&, const Tensor<T>& g) { return Grads<T>{g, g}; });
}

template <typename T>
V<T> sub(const V<T>& a, const V<T>& b) {
  math::check_same(a.shape(), b.shape(), "sub");
  return V<T>::from_op(zip(a.value(), b.value(), [](T x, T y) { return x - y; }), {a, b},
                       [](const ag::Node<T>&, const Tensor<T>& g) {
                         return Grads<T>{g, math::scaled(g, T{-1})};
                       });
}

template <typename T>
V<T> mul(const V<T>& a, const V<T>& b) {
  math::check_same(a.shape(), b.shape(), "mul");
  return V<T>::from_op(zip(a.value(), b.value(), [](T x, T y) { return x * y; }), {a, b},
                       [](const ag::Node<T>& n, const Tensor<T>& g) {
                         Grads<T> out(2);
                         if (needs(n, 0)) out[0] = math::hadamard(g, in(n, 1));
                         if (needs(n, 1)) out[1] = math::hadamard(g, in(n, 0));
                         return out;
                       });
}

template <typename T>
V<T> scale(const V<T>& a, T s) {
  return V<T>::from_op(math::scaled(a.value(), s), {a},
                       [s](const ag::Node<T>&, const Tensor<T>& g) {
                         return Grads<T>{math::scaled(g, s)};
                       });
}

template <typename T>
V<T> add_scalar(const V<T>& a, T s) {
  return V<T>::from_op(map(a.value(), [s](T x) { return x + s; }), {a},
                       [](const ag::Node<T>&, const Tensor<T>& g) { return Grads<T>{g}; });
}

template <typename T>
V<T> mul_const(const V<T>& a, const Tensor<T>& m) {
  math::check_same(a.shape(), m.shape(), "mul_const");
  return V<T>::from_op(math::hadamard(a.value(), m), {a},
                       [m](const ag::Node<T>&, const Tensor<T>& g) {
                         return Grads<T>{math::hadamard(g, m)};
                       });
}

template <typename T>
V<T> add_bias(const V<T>& x, const V<T>& b) {
  const int64_t c = b.size();
  require(b.value().rank() == 1 && x.dim(-1) == c,
          "add_bias: bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
  Tensor<T> out = x.value();
  const int64_t rows = out.size() / c;
#pragma omp parallel for schedule(static) if (rows > 4096)
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) out[r * c + j] += b.value()[j];
  return V<T>::from_op(std::move(out), {x, b}, [c](const ag::Node<T>& n, const Tensor<T>& g) {
    Grads<T> grads(2);
    if (needs(n, 0)) grads[0] = g;
    if (needs(n, 1)) {
      Tensor<T> gb({c});
      const int64_t rows = g.size() / c;
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
      grads[1] = std::move(gb);
    }
    return grads;
  });
}

template <typename T>
V<T> relu(const V<T>& x) {
  return V<T>::from_op(map(x.value(), [](T v) { return v > T{0} ? v : T{0}; }), {x},
                       [](const ag::Node<T>& n, const Tensor<T>& g) {
                         return Grads<T>{zip(g, in(n, 0), [](T gv, T xv) { return xv > T{0} ? gv : T{0}; })};
                       });
}

template <typename T>
V<T> leaky_relu(const V<T>& x, T slope) {
  return V<T>::from_op(map(x.value(), [slope](T v) { return v > T{0} ? v : slope * v; }), {x},
                       [slope](const ag::Node<T>& n, const Tensor<T>& g) {
                         return Grads<T>{zip(g, in(n, 0), [slope](T gv, T xv) {
                           return xv > T{0} ? gv : slope * gv;
                         })};
                       });
}

template <typename T>
V<T> tanh(const V<T>& x) {
  return V<T>::from_op(map(x.value(), [](T v) { return std::tanh(v); }), {x},
                       [](const ag::Node<T>& n, const Tensor<T>& g) {
                         return Grads<T>{zip(g, n.value, [](T gv, T y) { return gv * (T{1} - y * y); })};
                       });
}

template <typename T>
V<T> log_sigmoid(const V<T>& x) {
  auto f = [](T v) { return std::min(v, T{0}) - std::log1p(std::exp(-std::abs(v))); };
  return V<T>::from_op(map(x.value(), f), {x}, [](const ag::Node<T>& n, const Tensor<T>& g) {
    // d/dx log sigmoid(x) = sigmoid(-x)
    return Grads<T>{zip(g, in(n, 0), [](T gv, T xv) {
      const T s = xv >= T{0} ? std::exp(-xv) / (T{1} + std::exp(-xv)) : T{1} / (T{1} + std::exp(xv));
      return gv * s;
    })};
  });
}

template <typename T>
V<T> square(const V<T>& x) {
  return V<T>::from_op(map(x.value(), [](T v) { return v * v; }), {x},
                       [](const ag::Node<T>& n, const Tensor<T>& g) {
                         return Grads<T>{zip(g, in(n, 0), [](T gv, T xv) { return T{2} * xv * gv; })};
                       });
}

template <typename T>
V<T> sum(const V<T>& x) {
  T acc = 0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.value()[i];
  return V<T>::from_op(Tensor<T>(Shape{}, acc), {x}, [](const ag::Node<T>& n, const Tensor<T>& g) {
    return Grads<T>{Tensor<T>(in(n, 0).shape(), g[0])};
  });
}

template <typename T>
V<T> mean(const V<T>& x) {
  require(x.size() > 0, "mean of an empty tensor");
  const T count = static_cast<T>(x.size());
  T acc = 0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.value()[i];
  return V<T>::from_op(Tensor<T>(Shape{}, acc / count), {x},
                       [count](const ag::Node<T>& n, const Tensor<T>& g) {
                         return Grads<T>{Tensor<T>(in(n, 0).shape(), g[0] / count)};
                       });
}

template <typename T>
V<T> reshape(const V<T>& x, Shape shape) {
  return V<T>::from_op(x.value().reshaped(std::move(shape)), {x},
                       [](const ag::Node<T>& n, const Tensor<T>& g) {
                         return Grads<T>{g.reshaped(in(n, 0).shape())};
                       });
}

template <typename T>
V<T> linear(const V<T>& x, const V<T>& w) {
  require(x.value().rank() == 2 && w.value().rank() == 2 && x.dim(1) == w.dim(1),
          "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  const int64_t n = x.dim(0), i = x.dim(1), o = w.dim(0);
  Tensor<T> out({n, o});
  kernels::gemm(Trans::No, Trans::Yes, n, o, i, T{1}, x.value().data(), w.value().data(), T{0}, out.data());
  return V<T>::from_op(std::move(out), {x, w}, [n, i, o](const ag::Node<T>& nd, const Tensor<T>& g) {
    Grads<T> grads(2);
    if (needs(nd, 0)) {
      grads[0] = Tensor<T>({n, i});
      kernels::gemm(Trans::No, Trans::No, n, i, o, T{1}, g.data(), in(nd, 1).data(), T{0}, grads[0].data());
    }
    if (needs(nd, 1)) {
      grads[1] = Tensor<T>({o, i});
      kernels::gemm(Trans::Yes, Trans::No, o, i, n, T{1}, g.data(), in(nd, 0).data(), T{0}, grads[1].data());
    }
    return grads;
  });
}

template <typename T>
V<T> conv2d(const V<T>& x, const V<T>& w, int64_t stride, int64_t pad) {
  require(x.value().rank() == 4 && w.value().rank() == 4 && w.dim(1) == w.dim(2) && w.dim(3) == x.dim(3),
          "conv2d: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  kernels::ConvGeometry geo{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(1), stride, pad};
  const int64_t o = w.dim(0), ho = geo.out_height(), wo = geo.out_width(), k = geo.patch();
  const bool direct = geo.kernel == 1 && stride == 1 && pad == 0;
  const int64_t rows_per_image = ho * wo;
  const int64_t chunk = std::max<int64_t>(1, kIm2colBudget / std::max<int64_t>(1, rows_per_image * k));
  const int64_t in_per_image = geo.height * geo.width * geo.channels;

  Tensor<T> out({geo.batch, ho, wo, o});
  std::vector<T> cols;
  for (int64_t n0 = 0; n0 < geo.batch; n0 += chunk) {
    kernels::ConvGeometry part = geo;
    part.batch = std::min(chunk, geo.batch - n0);
    const T* xin = x.value().data() + n0 * in_per_image;
    const T* a = xin;
    if (!direct) {
      cols.resize(static_cast<size_t>(part.rows() * k));
      kernels::im2col(part, xin, cols.data());
      a = cols.data();
    }
    kernels::gemm(Trans::No, Trans::Yes, part.rows(), o, k, T{1}, a, w.value().data(), T{0},
                  out.data() + n0 * rows_per_image * o);
  }

  return V<T>::from_op(std::move(out), {x, w},
                       [geo, o, k, direct, chunk, rows_per_image, in_per_image](const ag::Node<T>& nd,
                                                                               const Tensor<T>& g) {
    Grads<T> grads(2);
    const bool want_x = needs(nd, 0), want_w = needs(nd, 1);
    if (want_x) grads[0] = Tensor<T>(in(nd, 0).shape());
    if (want_w) grads[1] = Tensor<T>(in(nd, 1).shape());
    std::vector<T> cols, dcols;
    for (int64_t n0 = 0; n0 < geo.batch; n0 += chunk) {
      kernels::ConvGeometry part = geo;
      part.batch = std::min(chunk, geo.batch - n0);
      const int64_t rows = part.rows();
      const T* gout = g.data() + n0 * rows_per_image * o;
      if (want_w) {
        const T* xin = in(nd, 0).data() + n0 * in_per_image;
        const T* a = xin;
        if (!direct) {
          cols.resize(static_cast<size_t>(rows * k));
          kernels::im2col(part, xin, cols.data());
          a = cols.data();
        }
        kernels::gemm(Trans::Yes, Trans::No, o, k, rows, T{1}, gout, a, n0 == 0 ? T{0} : T{1},
                      grads[1].data());
      }
      if (want_x) {
        T* dx = grads[0].data() + n0 * in_per_image;
        if (direct) {
          kernels::gemm(Trans::No, Trans::No, rows, k, o, T{1}, gout, in(nd, 1).data(), T{0}, dx);
        } else {
          dcols.resize(static_cast<size_t>(rows * k));
          kernels::gemm(Trans::No, Trans::No, rows, k, o, T{1}, gout, in(nd, 1).data(), T{0}, dcols.data());
          kernels::col2im(part, dcols.data(), dx);
        }
      }
    }
    return grads;
  });
}

template <typename T>
V<T> avg_pool2(const V<T>& x) {
  require(x.value().rank() == 4 && x.dim(1) % 2 == 0 && x.dim(2) % 2 == 0,
          "avg_pool2 needs even spatial dims, got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> out({n, h / 2, w / 2, c});
  const T* s = x.value().data();
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < h / 2; ++i)
      for (int64_t j = 0; j < w / 2; ++j)
        for (int64_t ch = 0; ch < c; ++ch) {
          auto at = [&](int64_t y, int64_t xx) { return s[((b * h + y) * w + xx) * c + ch]; };
          out[((b * (h / 2) + i) * (w / 2) + j) * c + ch] =
              (at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) + at(2 * i + 1, 2 * j + 1)) *
              T{0.25};
        }
  return V<T>::from_op(std::move(out), {x}, [n, h, w, c](const ag::Node<T>&, const Tensor<T>& g) {
    Tensor<T> dx({n, h, w, c});
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < n; ++b)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx)
          for (int64_t ch = 0; ch < c; ++ch)
            dx[((b * h + y) * w + xx) * c + ch] = g[((b * (h / 2) + y / 2) * (w / 2) + xx / 2) * c + ch] * T{0.25};
    return Grads<T>{std::move(dx)};
  });
}

template <typename T>
V<T> upsample2(const V<T>& x) {
  require(x.value().rank() == 4, "upsample2 expects NHWC, got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor<T> out({n, 2 * h, 2 * w, c});
  const T* s = x.value().data();
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t xx = 0; xx < 2 * w; ++xx)
        for (int64_t ch = 0; ch < c; ++ch)
          out[((b * 2 * h + y) * 2 * w + xx) * c + ch] = s[((b * h + y / 2) * w + xx / 2) * c + ch];
  return V<T>::from_op(std::move(out), {x}, [n, h, w, c](const ag::Node<T>&, const Tensor<T>& g) {
    Tensor<T> dx({n, h, w, c});
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < n; ++b)
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
          for (int64_t ch = 0; ch < c; ++ch) {
            auto at = [&](int64_t y, int64_t xx) { return g[((b * 2 * h + y) * 2 * w + xx) * c + ch]; };
            dx[((b * h + i) * w + j) * c + ch] =
                at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) + at(2 * i + 1, 2 * j + 1);
          }
    return Grads<T>{std::move(dx)};
  });
}

template <typename T>
V<T> global_sum_pool(const V<T>& x) {
  require(x.value().rank() == 4, "global_sum_pool expects NHWC, got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<T> out({n, c});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t p = 0; p < hw; ++p)
      for (int64_t ch = 0; ch < c; ++ch) out[b * c + ch] += x.value()[(b * hw + p) * c + ch];
  return V<T>::from_op(std::move(out), {x}, [n, hw, c](const ag::Node<T>& nd, const Tensor<T>& g) {
    Tensor<T> dx(in(nd, 0).shape());
    for (int64_t b = 0; b < n; ++b)
      for (int64_t p = 0; p < hw; ++p)
        for (int64_t ch = 0; ch < c; ++ch) dx[(b * hw + p) * c + ch] = g[b * c + ch];
    return Grads<T>{std::move(dx)};
  });
}

template <typename T>
V<T> batch_norm(const V<T>& x, T eps) {
  require(x.value().rank() >= 2, "batch_norm expects [N,...,C], got " + shape_str(x.shape()));
  if (x.dim(0) < 2)
    throw std::invalid_argument("batch_norm with batch statistics needs at least 2 samples, got " +
                                std::to_string(x.dim(0)));
  const int64_t c = x.dim(-1);
  const int64_t m = x.size() / c;
  const Tensor<T>& xv = x.value();
  std::vector<double> mu(static_cast<size_t>(c), 0.0), var(static_cast<size_t>(c), 0.0);
  for (int64_t r = 0; r < m; ++r)
    for (int64_t ch = 0; ch < c; ++ch) mu[ch] += xv[r * c + ch];
  for (auto& v : mu) v /= static_cast<double>(m);
  for (int64_t r = 0; r < m; ++r)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double d = xv[r * c + ch] - mu[ch];
      var[ch] += d * d;
    }
  Tensor<T> inv_std({c});
  for (int64_t ch = 0; ch < c; ++ch)
    inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] / static_cast<double>(m) + static_cast<double>(eps)));
  Tensor<T> out(xv.shape());
#pragma omp parallel for schedule(static) if (m > 4096)
  for (int64_t r = 0; r < m; ++r)
    for (int64_t ch = 0; ch < c; ++ch)
      out[r * c + ch] = static_cast<T>((xv[r * c + ch] - mu[ch])) * inv_std[ch];
  return V<T>::from_op(std::move(out), {x}, [c, m, inv_std](const ag::Node<T>& nd, const Tensor<T>& g) {
    // dx = inv_std * (g - mean(g) - xhat * mean(g * xhat))
    const Tensor<T>& xhat = nd.value;
    std::vector<double> mg(static_cast<size_t>(c), 0.0), mgx(static_cast<size_t>(c), 0.0);
    for (int64_t r = 0; r < m; ++r)
      for (int64_t ch = 0; ch < c; ++ch) {
        mg[ch] += g[r * c + ch];
        mgx[ch] += static_cast<double>(g[r * c + ch]) * xhat[r * c + ch];
      }
    for (int64_t ch = 0; ch < c; ++ch) {
      mg[ch] /= static_cast<double>(m);
      mgx[ch] /= static_cast<double>(m);
    }
    Tensor<T> dx(g.shape());
#pragma omp parallel for schedule(static) if (m > 4096)
    for (int64_t r = 0; r < m; ++r)
      for (int64_t ch = 0; ch < c; ++ch)
        dx[r * c + ch] = inv_std[ch] * static_cast<T>(g[r * c + ch] - mg[ch] - xhat[r * c + ch] * mgx[ch]);
    return Grads<T>{std::move(dx)};
  });
}

template <typename T>
V<T> channel_affine(const V<T>& x, const V<T>& gamma, const V<T>& beta) {
  const int64_t n = x.dim(0), c = x.dim(-1);
  const int64_t per_sample = x.size() / (n * c);
  const bool per_n = gamma.value().rank() == 2;
  require(gamma.shape() == beta.shape(), "channel_affine: gamma/beta shape mismatch");
  require(per_n ? (gamma.dim(0) == n && gamma.dim(1) == c) : (gamma.value().rank() == 1 && gamma.dim(0) == c),
          "channel_affine: modulation " + shape_str(gamma.shape()) + " vs input " + shape_str(x.shape()));
  auto pidx = [per_n, c](int64_t b, int64_t ch) { return per_n ? b * c + ch : ch; };
  Tensor<T> out(x.shape());
  const T* xs = x.value().data();
  const T* gs = gamma.value().data();
  const T* bs = beta.value().data();
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t p = 0; p < per_sample; ++p)
      for (int64_t ch = 0; ch < c; ++ch) {
        const int64_t i = (b * per_sample + p) * c + ch;
        out[i] = xs[i] * gs[pidx(b, ch)] + bs[pidx(b, ch)];
      }
  return V<T>::from_op(std::move(out), {x, gamma, beta},
                       [n, c, per_sample, pidx](const ag::Node<T>& nd, const Tensor<T>& g) {
    Grads<T> grads(3);
    const Tensor<T>& xv = in(nd, 0);
    const Tensor<T>& gm = in(nd, 1);
    if (needs(nd, 0)) {
      grads[0] = Tensor<T>(xv.shape());
      for (int64_t b = 0; b < n; ++b)
        for (int64_t p = 0; p < per_sample; ++p)
          for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t i = (b * per_sample + p) * c + ch;
            grads[0][i] = g[i] * gm[pidx(b, ch)];
          }
    }
    if (needs(nd, 1) || needs(nd, 2)) {
      Tensor<T> dg(gm.shape()), db(gm.shape());
      for (int64_t b = 0; b < n; ++b)
        for (int64_t p = 0; p < per_sample; ++p)
          for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t i = (b * per_sample + p) * c + ch;
            dg[pidx(b, ch)] += g[i] * xv[i];
            db[pidx(b, ch)] += g[i];
          }
      if (needs(nd, 1)) grads[1] = std::move(dg);
      if (needs(nd, 2)) grads[2] = std::move(db);
    }
    return grads;
  });
}

template <typename T>
V<T> gather_rows(const V<T>& x, const std::vector<int64_t>& rows) {
  const int64_t n = x.dim(0);
  const int64_t stride = x.size() / std::max<int64_t>(n, 1);
  Shape shape = x.shape();
  shape[0] = static_cast<int64_t>(rows.size());
  Tensor<T> out(shape);
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= n)
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[r]) + " outside [0," + std::to_string(n) + ")");
    std::copy_n(x.value().data() + rows[r] * stride, stride, out.data() + static_cast<int64_t>(r) * stride);
  }
  return V<T>::from_op(std::move(out), {x}, [rows, stride](const ag::Node<T>& nd, const Tensor<T>& g) {
    Tensor<T> dx(in(nd, 0).shape());
    for (size_t r = 0; r < rows.size(); ++r) {
      T* dst = dx.data() + rows[r] * stride;
      const T* src = g.data() + static_cast<int64_t>(r) * stride;
      for (int64_t i = 0; i < stride; ++i) dst[i] += src[i];
    }
    return Grads<T>{std::move(dx)};
  });
}

namespace {
template <typename T>
Tensor<T> rotate_batch(const Tensor<T>& x, const std::vector<int>& turns, bool inverse) {
  const int64_t n = x.dim(0), s = x.dim(1), c = x.dim(3);
  Tensor<T> out(x.shape());
  const int64_t per = s * s * c;
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < n; ++b) {
    const int t = inverse ? (4 - turns[b]) & 3 : turns[b] & 3;
    const T* src = x.data() + b * per;
    T* dst = out.data() + b * per;
    for (int64_t i = 0; i < s; ++i)
      for (int64_t j = 0; j < s; ++j) {
        const auto [si, sj] = rotation::source_pixel(i, j, s, t);
        for (int64_t ch = 0; ch < c; ++ch) dst[(i * s + j) * c + ch] = src[(si * s + sj) * c + ch];
      }
  }
  return out;
}
}  // namespace

template <typename T>
V<T> rotate(const V<T>& x, const std::vector<int>& turns) {
  require(x.value().rank() == 4 && x.dim(1) == x.dim(2), "rotate needs square NHWC images, got " + shape_str(x.shape()));
  require(static_cast<int64_t>(turns.size()) == x.dim(0), "rotate: one turn count per sample required");
  return V<T>::from_op(rotate_batch(x.value(), turns, false), {x},
                       [turns](const ag::Node<T>&, const Tensor<T>& g) {
                         return Grads<T>{rotate_batch(g, turns, true)};
                       });
}

template <typename T>
V<T> rowwise_dot(const V<T>& a, const V<T>& b) {
  math::check_same(a.shape(), b.shape(), "rowwise_dot");
  require(a.value().rank() == 2, "rowwise_dot expects [N,C]");
  const int64_t n = a.dim(0), c = a.dim(1);
  Tensor<T> out({n, 1});
  for (int64_t r = 0; r < n; ++r) {
    T acc = 0;
    for (int64_t j = 0; j < c; ++j) acc += a.value()[r * c + j] * b.value()[r * c + j];
    out[r] = acc;
  }
  return V<T>::from_op(std::move(out), {a, b}, [n, c](const ag::Node<T>& nd, const Tensor<T>& g) {
    Grads<T> grads(2);
    for (size_t side = 0; side < 2; ++side) {
      if (!needs(nd, side)) continue;
      const Tensor<T>& other = in(nd, 1 - side);
      Tensor<T> d(other.shape());
      for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < c; ++j) d[r * c + j] = g[r] * other[r * c + j];
      grads[side] = std::move(d);
    }
    return grads;
  });
}

template <typename T>
V<T> log_softmax_pick(const V<T>& logits, const std::vector<int32_t>& labels) {
  require(logits.value().rank() == 2, "log_softmax_pick expects [N,K], got " + shape_str(logits.shape()));
  const int64_t n = logits.dim(0), k = logits.dim(1);
  require(static_cast<int64_t>(labels.size()) == n, "log_softmax_pick: one label per row required");
  for (int32_t l : labels)
    if (l < 0 || l >= k)
      throw std::out_of_range("label " + std::to_string(l) + " outside [0," + std::to_string(k) + ")");
  Tensor<T> probs({n, k});
  Tensor<T> out({n});
  const Tensor<T>& lv = logits.value();
  for (int64_t r = 0; r < n; ++r) {
    T mx = lv[r * k];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, lv[r * k + j]);
    T z = 0;
    for (int64_t j = 0; j < k; ++j) z += std::exp(lv[r * k + j] - mx);
    const T lse = mx + std::log(z);
    for (int64_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(lv[r * k + j] - lse);
    out[r] = lv[r * k + labels[r]] - lse;
  }
  return V<T>::from_op(std::move(out), {logits}, [labels, probs, n, k](const ag::Node<T>&, const Tensor<T>& g) {
    Tensor<T> d({n, k});
    for (int64_t r = 0; r < n; ++r)
      for (int64_t j = 0; j < k; ++j)
        d[r * k + j] = g[r] * ((j == labels[r] ? T{1} : T{0}) - probs[r * k + j]);
    return Grads<T>{std::move(d)};
  });
}

template <typename T>
V<T> spectral_scale(const V<T>& w, const Tensor<T>& u, const Tensor<T>& v) {
  const int64_t rows = u.size(), cols = v.size();
  require(rows * cols == w.size(), "spectral_scale: u/v sizes do not match weight " + shape_str(w.shape()));
  const Tensor<T>& wv = w.value();
  double sigma = 0;
  for (int64_t i = 0; i < rows; ++i) {
    double acc = 0;
    for (int64_t j = 0; j < cols; ++j) acc += static_cast<double>(wv[i * cols + j]) * v[j];
    sigma += acc * u[i];
  }
  const T s = static_cast<T>(std::max(sigma, 1e-12));
  return V<T>::from_op(math::scaled(wv, T{1} / s), {w},
                       [u, v, s, rows, cols](const ag::Node<T>& nd, const Tensor<T>& g) {
    // d(W/s) with s = u^T W v: g/s - <g, W>/s^2 * u v^T
    const double gw = math::dot(g, in(nd, 0));
    const T coef = static_cast<T>(gw / (static_cast<double>(s) * s));
    Tensor<T> d(g.shape());
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) d[i * cols + j] = g[i * cols + j] / s - coef * u[i] * v[j];
    return Grads<T>{std::move(d)};
  });
}

template <typename T>
Tensor<T> relu_mask(const Tensor<T>& pre) {
  return map(pre, [](T v) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> leaky_relu_mask(const Tensor<T>& pre, T slope) {
  return map(pre, [slope](T v) { return v > T{0} ? T{1} : slope; });
}

#define SSGAN_INSTANTIATE_OPS(T)                                                             \
  template V<T> add(const V<T>&, const V<T>&);                                               \
  template V<T> sub(const V<T>&, const V<T>&);                                               \
  template V<T> mul(const V<T>&, const V<T>&);                                               \
  template V<T> scale(const V<T>&, T);                                                       \
  template V<T> add_scalar(const V<T>&, T);                                                  \
  template V<T> mul_const(const V<T>&, const Tensor<T>&);                                    \
  template V<T> add_bias(const V<T>&, const V<T>&);                                          \
  template V<T> relu(const V<T>&);                                                           \
  template V<T> leaky_relu(const V<T>&, T);                                                  \
  template V<T> tanh(const V<T>&);                                                           \
  template V<T> log_sigmoid(const V<T>&);                                                    \
  template V<T> square(const V<T>&);                                                         \
  template V<T> sum(const V<T>&);                                                            \
  template V<T> mean(const V<T>&);                                                           \
  template V<T> reshape(const V<T>&, Shape);                                                 \
  template V<T> linear(const V<T>&, const V<T>&);                                            \
  template V<T> conv2d(const V<T>&, const V<T>&, int64_t, int64_t);                          \
  template V<T> avg_pool2(const V<T>&);                                                      \
  template V<T> upsample2(const V<T>&);                                                      \
  template V<T> global_sum_pool(const V<T>&);                                                \
  template V<T> batch_norm(const V<T>&, T);                                                  \
  template V<T> channel_affine(const V<T>&, const V<T>&, const V<T>&);                       \
  template V<T> gather_rows(const V<T>&, const std::vector<int64_t>&);                       \
  template V<T> rotate(const V<T>&, const std::vector<int>&);                                \
  template V<T> rowwise_dot(const V<T>&, const V<T>&);                                       \
  template V<T> log_softmax_pick(const V<T>&, const std::vector<int32_t>&);                  \
  template V<T> spectral_scale(const V<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> relu_mask(const Tensor<T>&);                                            \
  template Tensor<T> leaky_relu_mask(const Tensor<T>&, T);

SSGAN_INSTANTIATE_OPS(float)
SSGAN_INSTANTIATE_OPS(double)

}  // namespace ssgan::ops
