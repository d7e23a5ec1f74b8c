#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssgan/layers.hpp"

namespace ssgan::optim {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
};

// Adam over a fixed list of named parameters. step() consumes and clears the
// accumulated gradients; parameters without a gradient are left untouched.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<nn::NamedVar<T>> params, AdamConfig cfg);

  void step();
  void zero_grad();
  int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

  // Moment tensors keyed "<param>.adam_m" / "<param>.adam_v", plus the step count.
  std::map<std::string, Tensor<T>> state() const;
  void load_state(const std::map<std::string, Tensor<T>>& state);

 private:
  std::vector<nn::NamedVar<T>> params_;
  std::vector<Tensor<T>> m_, v_;
  AdamConfig cfg_;
  int64_t steps_ = 0;
};

// Heavy-ball SGD: v = momentum * v + g; p -= lr * v.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(std::vector<nn::NamedVar<T>> params, double lr, double momentum);
  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<nn::NamedVar<T>> params_;
  std::vector<Tensor<T>> velocity_;
  double lr_;
  double momentum_;
};

}  // namespace ssgan::optim
