#include "ssgan/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ssgan::optim {

template <typename T>
Adam<T>::Adam(std::vector<nn::NamedVar<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T step = static_cast<T>(cfg_.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(cfg_.eps);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& var = params_[i].var;
    if (!var.has_grad()) continue;
    const Tensor<T>& g = var.grad();
    Tensor<T>& p = var.mutable_value();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const int64_t n = p.size();
#pragma omp parallel for simd schedule(static) if (n > 65536)
    for (int64_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      p[j] -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
    var.zero_grad();
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template <typename T>
std::map<std::string, Tensor<T>> Adam<T>::state() const {
  std::map<std::string, Tensor<T>> out;
  for (size_t i = 0; i < params_.size(); ++i) {
    out[params_[i].name + ".adam_m"] = m_[i];
    out[params_[i].name + ".adam_v"] = v_[i];
  }
  out["adam.steps"] = Tensor<T>({1}, static_cast<T>(steps_));
  return out;
}

template <typename T>
void Adam<T>::load_state(const std::map<std::string, Tensor<T>>& state) {
  auto fetch = [&](const std::string& key) -> const Tensor<T>& {
    auto it = state.find(key);
    if (it == state.end()) throw std::runtime_error("optimizer state missing '" + key + "'");
    return it->second;
  };
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i] = fetch(params_[i].name + ".adam_m");
    v_[i] = fetch(params_[i].name + ".adam_v");
    if (m_[i].shape() != params_[i].var.shape() || v_[i].shape() != params_[i].var.shape())
      throw std::runtime_error("optimizer state shape mismatch for '" + params_[i].name + "'");
  }
  steps_ = static_cast<int64_t>(fetch("adam.steps")[0]);
}

template <typename T>
SgdMomentum<T>::SgdMomentum(std::vector<nn::NamedVar<T>> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
  for (const auto& p : params_) velocity_.emplace_back(p.var.shape());
}

template <typename T>
void SgdMomentum<T>::step() {
  const T lr = static_cast<T>(lr_), mu = static_cast<T>(momentum_);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& var = params_[i].var;
    if (!var.has_grad()) continue;
    const Tensor<T>& g = var.grad();
    Tensor<T>& p = var.mutable_value();
    Tensor<T>& vel = velocity_[i];
    for (int64_t j = 0; j < p.size(); ++j) {
      vel[j] = mu * vel[j] + g[j];
      p[j] -= lr * vel[j];
    }
    var.zero_grad();
  }
}

template class Adam<float>;
template class Adam<double>;
template class SgdMomentum<float>;
template class SgdMomentum<double>;

}  // namespace ssgan::optim
