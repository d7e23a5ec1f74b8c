#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ssgan/tensor.hpp"

// Tape-free reverse-mode autodiff: every Var owns a node that points at its
// parents, and backward() walks the graph in reverse topological order.
namespace ssgan::ag {

template <typename T>
struct Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Given the node and the gradient of its output, returns one gradient per
// parent (an empty tensor means "no contribution").
template <typename T>
using BackwardFn = std::function<std::vector<Tensor<T>>(const Node<T>&, const Tensor<T>&)>;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // only populated on leaves
  bool requires_grad = false;
  std::vector<NodePtr<T>> parents;
  BackwardFn<T> backward;
};

bool grad_enabled();

// Disables graph construction in its scope (evaluation, feature extraction).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  // Builds an interior node; collapses to a constant when no input needs grad.
  static Var from_op(Tensor<T> value, std::vector<Var> inputs, BackwardFn<T> fn);

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(int i) const { return node_->value.dim(i); }
  int64_t size() const { return node_->value.size(); }
  T item() const { return node_->value[0]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor<T>& grad() { return node_->grad; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  // Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  const NodePtr<T>& node() const { return node_; }

 private:
  NodePtr<T> node_;
};

// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
// `seed` defaults to ones shaped like the root.
template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr);

// Returns d(root)/d(input) for each input without touching leaf gradients.
template <typename T>
std::vector<Tensor<T>> grad(const Var<T>& root, const std::vector<Var<T>>& inputs,
                            const Tensor<T>* seed = nullptr);

using VarF = Var<float>;
using VarD = Var<double>;

}  // namespace ssgan::ag
