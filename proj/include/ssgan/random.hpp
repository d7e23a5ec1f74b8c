#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "ssgan/tensor.hpp"

namespace ssgan {

// Deterministic RNG with serializable state. Normal draws construct a fresh
// distribution each call so no hidden cached variate survives a save/restore.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
    return std::uniform_int_distribution<int64_t>(lo, hi_inclusive)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  template <typename T>
  Tensor<T> normal_tensor(Shape shape, double stddev = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.span()) v = static_cast<T>(normal() * stddev);
    return t;
  }
  template <typename T>
  Tensor<T> uniform_tensor(Shape shape, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.span()) v = static_cast<T>(uniform(lo, hi));
    return t;
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and a label.
inline uint64_t derive_seed(uint64_t base, std::string_view label) {
  uint64_t h = 1469598103934665603ull ^ (base * 0x9E3779B97F4A7C15ull);
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;
  }
  // splitmix64 finalizer
  h += 0x9E3779B97F4A7C15ull;
  h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ull;
  h = (h ^ (h >> 27)) * 0x94D049BB133111EBull;
  return h ^ (h >> 31);
}

}  // namespace ssgan
