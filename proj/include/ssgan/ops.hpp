#pragma once

#include <cstdint>
#include <vector>

#include "ssgan/autograd.hpp"
#include "ssgan/tensor.hpp"

// Differentiable operations. Images are NHWC; conv weights are
// [out, k, k, in], i.e. a 2-D [out, k*k*in] matrix for spectral norm.
namespace ssgan::ops {

template <typename T>
using V = ag::Var<T>;

template <typename T> V<T> add(const V<T>& a, const V<T>& b);
template <typename T> V<T> sub(const V<T>& a, const V<T>& b);
template <typename T> V<T> mul(const V<T>& a, const V<T>& b);
template <typename T> V<T> scale(const V<T>& a, T s);
template <typename T> V<T> add_scalar(const V<T>& a, T s);
// Multiplies by a constant tensor (masks, tangent Jacobians).
template <typename T> V<T> mul_const(const V<T>& a, const Tensor<T>& m);
// x[..., C] + b[C]
template <typename T> V<T> add_bias(const V<T>& x, const V<T>& b);

template <typename T> V<T> relu(const V<T>& x);
template <typename T> V<T> leaky_relu(const V<T>& x, T slope);
template <typename T> V<T> tanh(const V<T>& x);
// log(sigmoid(x)) evaluated without overflow.
template <typename T> V<T> log_sigmoid(const V<T>& x);
template <typename T> V<T> square(const V<T>& x);

// Full reductions to a rank-0 tensor.
template <typename T> V<T> sum(const V<T>& x);
template <typename T> V<T> mean(const V<T>& x);

template <typename T> V<T> reshape(const V<T>& x, Shape shape);

// x[N,I] * W[O,I]^T -> [N,O]
template <typename T> V<T> linear(const V<T>& x, const V<T>& w);
template <typename T> V<T> conv2d(const V<T>& x, const V<T>& w, int64_t stride, int64_t pad);

template <typename T> V<T> avg_pool2(const V<T>& x);
template <typename T> V<T> upsample2(const V<T>& x);
// [N,H,W,C] -> [N,C]
template <typename T> V<T> global_sum_pool(const V<T>& x);

// Per-channel normalization with batch statistics (no affine). Rejects N == 1.
template <typename T> V<T> batch_norm(const V<T>& x, T eps);
// x * gamma + beta per channel; gamma/beta are [C] (shared) or [N,C] (per sample).
template <typename T> V<T> channel_affine(const V<T>& x, const V<T>& gamma, const V<T>& beta);

template <typename T> V<T> gather_rows(const V<T>& x, const std::vector<int64_t>& rows);
// Per-sample counter-clockwise quarter turns of a square NHWC batch.
template <typename T> V<T> rotate(const V<T>& x, const std::vector<int>& turns);

// [N,C] . [N,C] -> [N,1]
template <typename T> V<T> rowwise_dot(const V<T>& a, const V<T>& b);
// log softmax(logits[N,K])[n, label[n]] -> [N]
template <typename T> V<T> log_softmax_pick(const V<T>& logits, const std::vector<int32_t>& labels);

// W / sigma with sigma = u^T W v (u, v held constant), W viewed as [rows, cols].
template <typename T> V<T> spectral_scale(const V<T>& w, const Tensor<T>& u, const Tensor<T>& v);

// Constant masks used for tangent propagation through piecewise-linear units.
template <typename T> Tensor<T> relu_mask(const Tensor<T>& pre);
template <typename T> Tensor<T> leaky_relu_mask(const Tensor<T>& pre, T slope);

}  // namespace ssgan::ops
