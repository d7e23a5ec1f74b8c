#include "ssgan/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssgan/random.hpp"

namespace ssgan::nn {

template <typename T>
Tensor<T> orthogonal(int64_t rows, int64_t cols, uint64_t seed, double gain) {
  Rng rng(seed);
  const int64_t big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (int64_t i = 0; i < big; ++i)
    for (int64_t j = 0; j < small; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign fix so the factorization is unique.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
  for (int64_t j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  Tensor<T> out({rows, cols});
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j)
      out[i * cols + j] = static_cast<T>(gain * (rows >= cols ? q(i, j) : q(j, i)));
  return out;
}

template <typename T>
void ParamRegistry<T>::check_unique(const std::string& name) const {
  auto clash = [&](const NamedVar<T>& p) { return p.name == name; };
  if (std::any_of(params_.begin(), params_.end(), clash) || std::any_of(buffers_.begin(), buffers_.end(), clash))
    throw std::logic_error("duplicate parameter name: " + name);
}

template <typename T>
V<T> ParamRegistry<T>::parameter(const std::string& name, Shape shape, Init init, double gain) {
  check_unique(name);
  Tensor<T> value(shape);
  switch (init) {
    case Init::Zeros: break;
    case Init::Ones: value.fill(T{1}); break;
    case Init::Orthogonal: {
      const int64_t rows = shape.at(0);
      value = orthogonal<T>(rows, value.size() / rows, derive_seed(seed_, name), gain).reshaped(shape);
      break;
    }
  }
  V<T> var(std::move(value), true);
  params_.push_back({name, var});
  return var;
}

template <typename T>
V<T> ParamRegistry<T>::buffer(const std::string& name, Tensor<T> value) {
  check_unique(name);
  V<T> var(std::move(value), false);
  buffers_.push_back({name, var});
  return var;
}

template <typename T>
V<T> ParamRegistry<T>::unit_buffer(const std::string& name, int64_t size) {
  Rng rng(derive_seed(seed_, name));
  Tensor<T> t = rng.normal_tensor<T>({size});
  const double norm = std::sqrt(std::max(1e-24, [&] {
    double s = 0;
    for (auto x : t.span()) s += static_cast<double>(x) * x;
    return s;
  }()));
  for (auto& x : t.span()) x = static_cast<T>(x / norm);
  return buffer(name, std::move(t));
}

template <typename T>
int64_t ParamRegistry<T>::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

namespace {
constexpr double kSigmaFloor = 1e-12;
constexpr int kWarmupIterations = 15;

template <typename T>
bool normalize_into(const std::vector<double>& src, Tensor<T>& dst) {
  double s = 0;
  for (double x : src) s += x * x;
  const double norm = std::sqrt(s);
  if (norm < kSigmaFloor) return false;
  for (size_t i = 0; i < src.size(); ++i) dst[static_cast<int64_t>(i)] = static_cast<T>(src[i] / norm);
  return true;
}
}  // namespace

template <typename T>
double spectral_sigma(const Tensor<T>& weight, const SpectralNormState<T>& state) {
  const int64_t rows = state.u.size(), cols = state.v.size();
  double sigma = 0;
  for (int64_t i = 0; i < rows; ++i) {
    double acc = 0;
    for (int64_t j = 0; j < cols; ++j) acc += static_cast<double>(weight[i * cols + j]) * state.v[j];
    sigma += acc * state.u[i];
  }
  return sigma;
}

template <typename T>
std::pair<Tensor<T>, SpectralNormState<T>> spectral_normalize(const Tensor<T>& weight, SpectralNormState<T> state,
                                                             int iterations) {
  const int64_t rows = state.u.size(), cols = state.v.size();
  if (rows * cols != weight.size())
    throw ShapeError("spectral_normalize: state [" + std::to_string(rows) + "," + std::to_string(cols) +
                     "] does not match weight " + shape_str(weight.shape()));
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> v(static_cast<size_t>(cols), 0.0), u(static_cast<size_t>(rows), 0.0);
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) v[j] += static_cast<double>(weight[i * cols + j]) * state.u[i];
    normalize_into(v, state.v);
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) u[i] += static_cast<double>(weight[i * cols + j]) * state.v[j];
    normalize_into(u, state.u);
  }
  const double sigma = std::max(spectral_sigma(weight, state), kSigmaFloor);
  Tensor<T> out(weight.shape());
  for (int64_t i = 0; i < weight.size(); ++i) out[i] = static_cast<T>(weight[i] / sigma);
  return {std::move(out), std::move(state)};
}

template <typename T>
SpectralWeight<T>::SpectralWeight(ParamRegistry<T>& reg, const std::string& name, Shape shape, bool spectral)
    : spectral_(spectral) {
  const int64_t rows = shape.at(0);
  const int64_t cols = shape_size(shape) / rows;
  weight_ = reg.parameter(name + ".weight", std::move(shape), Init::Orthogonal);
  if (spectral_) {
    u_ = reg.unit_buffer(name + ".sn_u", rows);
    v_ = reg.unit_buffer(name + ".sn_v", cols);
    // Random u, v can give u^T W v <= 0; a short warm-up makes the estimate positive.
    for (int i = 0; i < kWarmupIterations; ++i) power_iteration();
  }
}

template <typename T>
V<T> SpectralWeight<T>::effective() const {
  if (!spectral_) return weight_;
  return ops::spectral_scale(weight_, u_.value(), v_.value());
}

template <typename T>
void SpectralWeight<T>::power_iteration() {
  if (!spectral_) return;
  SpectralNormState<T> state{u_.value(), v_.value()};
  auto [unused, next] = spectral_normalize(weight_.value(), std::move(state), 1);
  V<T> u = u_, v = v_;
  u.mutable_value() = std::move(next.u);
  v.mutable_value() = std::move(next.v);
}

template <typename T>
Linear<T>::Linear(ParamRegistry<T>& reg, const std::string& name, int64_t in, int64_t out, bool spectral, bool bias)
    : weight_(reg, name, {out, in}, spectral), has_bias_(bias) {
  if (has_bias_) bias_ = reg.parameter(name + ".bias", {out}, Init::Zeros);
}

template <typename T>
V<T> Linear<T>::operator()(const V<T>& x) const {
  V<T> y = ops::linear(x, weight_.effective());
  return has_bias_ ? ops::add_bias(y, bias_) : y;
}

template <typename T>
V<T> Linear<T>::linear_part(const V<T>& dx) const {
  return ops::linear(dx, weight_.effective());
}

template <typename T>
Conv2d<T>::Conv2d(ParamRegistry<T>& reg, const std::string& name, int64_t in, int64_t out, int64_t kernel,
                  int64_t stride, int64_t pad, bool spectral)
    : weight_(reg, name, {out, kernel, kernel, in}, spectral), stride_(stride), pad_(pad) {
  bias_ = reg.parameter(name + ".bias", {out}, Init::Zeros);
}

template <typename T>
V<T> Conv2d<T>::operator()(const V<T>& x) const {
  return ops::add_bias(ops::conv2d(x, weight_.effective(), stride_, pad_), bias_);
}

template <typename T>
V<T> Conv2d<T>::linear_part(const V<T>& dx) const {
  return ops::conv2d(dx, weight_.effective(), stride_, pad_);
}

template Tensor<float> orthogonal<float>(int64_t, int64_t, uint64_t, double);
template Tensor<double> orthogonal<double>(int64_t, int64_t, uint64_t, double);
template class ParamRegistry<float>;
template class ParamRegistry<double>;
template std::pair<Tensor<float>, SpectralNormState<float>> spectral_normalize(const Tensor<float>&,
                                                                              SpectralNormState<float>, int);
template std::pair<Tensor<double>, SpectralNormState<double>> spectral_normalize(const Tensor<double>&,
                                                                                SpectralNormState<double>, int);
template double spectral_sigma(const Tensor<float>&, const SpectralNormState<float>&);
template double spectral_sigma(const Tensor<double>&, const SpectralNormState<double>&);
template class SpectralWeight<float>;
template class SpectralWeight<double>;
template class Linear<float>;
template class Linear<double>;
template class Conv2d<float>;
template class Conv2d<double>;

}  // namespace ssgan::nn
