#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssgan/autograd.hpp"
#include "ssgan/ops.hpp"
#include "ssgan/tensor.hpp"

namespace ssgan::nn {

template <typename T>
using V = ag::Var<T>;

enum class Init { Orthogonal, Zeros, Ones };

template <typename T>
struct NamedVar {
  std::string name;
  V<T> var;
};

// Owns the named trainable parameters and non-trainable buffers of a model.
// Every tensor is initialized from its own stream derived from (seed, name),
// so adding a parameter never perturbs the initialization of the others.
template <typename T>
class ParamRegistry {
 public:
  explicit ParamRegistry(uint64_t seed = 0) : seed_(seed) {}

  V<T> parameter(const std::string& name, Shape shape, Init init, double gain = 1.0);
  V<T> buffer(const std::string& name, Tensor<T> value);
  // Random unit vector buffer (power-iteration state).
  V<T> unit_buffer(const std::string& name, int64_t size);

  std::vector<NamedVar<T>>& parameters() { return params_; }
  const std::vector<NamedVar<T>>& parameters() const { return params_; }
  std::vector<NamedVar<T>>& buffers() { return buffers_; }
  const std::vector<NamedVar<T>>& buffers() const { return buffers_; }
  int64_t parameter_count() const;
  uint64_t seed() const { return seed_; }

 private:
  void check_unique(const std::string& name) const;

  uint64_t seed_;
  std::vector<NamedVar<T>> params_;
  std::vector<NamedVar<T>> buffers_;
};

// Orthogonal matrix of shape [rows, cols] (rows or columns orthonormal).
template <typename T>
Tensor<T> orthogonal(int64_t rows, int64_t cols, uint64_t seed, double gain = 1.0);

// Power-iteration vectors for one weight viewed as [rows, cols].
template <typename T>
struct SpectralNormState {
  Tensor<T> u;  // [rows]
  Tensor<T> v;  // [cols]
};

// One (or more) power iterations, then weight / sigma_hat. sigma_hat is
// floored at a small epsilon; a vector whose update vanishes keeps its value.
template <typename T>
std::pair<Tensor<T>, SpectralNormState<T>> spectral_normalize(const Tensor<T>& weight,
                                                             SpectralNormState<T> state,
                                                             int iterations = 1);

// Largest-singular-value estimate u^T W v for the current state.
template <typename T>
double spectral_sigma(const Tensor<T>& weight, const SpectralNormState<T>& state);

// Weight with optional spectral normalization applied in the graph.
template <typename T>
class SpectralWeight {
 public:
  SpectralWeight() = default;
  SpectralWeight(ParamRegistry<T>& reg, const std::string& name, Shape shape, bool spectral);

  V<T> effective() const;
  void power_iteration();
  bool spectral() const { return spectral_; }
  const V<T>& raw() const { return weight_; }

 private:
  V<T> weight_;
  V<T> u_, v_;
  bool spectral_ = false;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamRegistry<T>& reg, const std::string& name, int64_t in, int64_t out, bool spectral,
         bool bias = true);

  V<T> operator()(const V<T>& x) const;
  // Tangent map: the linear part only.
  V<T> linear_part(const V<T>& dx) const;
  void power_iteration() { weight_.power_iteration(); }
  const SpectralWeight<T>& weight() const { return weight_; }

 private:
  SpectralWeight<T> weight_;
  V<T> bias_;
  bool has_bias_ = true;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamRegistry<T>& reg, const std::string& name, int64_t in, int64_t out, int64_t kernel,
         int64_t stride, int64_t pad, bool spectral);

  V<T> operator()(const V<T>& x) const;
  V<T> linear_part(const V<T>& dx) const;
  void power_iteration() { weight_.power_iteration(); }

 private:
  SpectralWeight<T> weight_;
  V<T> bias_;
  int64_t stride_ = 1;
  int64_t pad_ = 0;
};

}  // namespace ssgan::nn
