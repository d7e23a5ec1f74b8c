#include "ssgan/autograd.hpp"

#include <unordered_map>
#include <unordered_set>

#include "ssgan/tensor_math.hpp"

namespace ssgan::ag {
namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS; graphs can be deep.
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void accumulate(Tensor<T>& into, Tensor<T>&& g) {
  if (into.empty()) {
    into = std::move(g);
  } else {
    if (into.shape() != g.shape())
      throw ShapeError("gradient shape mismatch: " + shape_str(into.shape()) + " vs " +
                       shape_str(g.shape()));
    math::add_inplace(into, g);
  }
}

// Runs the reverse sweep. Leaf gradients either accumulate into the leaves or
// are captured for the requested nodes only.
template <typename T>
void run_backward(const Var<T>& root, const Tensor<T>* seed,
                  std::unordered_map<Node<T>*, Tensor<T>>* capture) {
  if (!root.requires_grad()) return;
  Node<T>* root_node = root.node().get();
  const auto order = topo_order(root_node);

  std::unordered_map<Node<T>*, Tensor<T>> grads;
  grads[root_node] = seed ? *seed : Tensor<T>(root.shape(), T{1});
  if (grads[root_node].shape() != root.shape())
    throw ShapeError("backward seed shape " + shape_str(grads[root_node].shape()) +
                     " does not match root " + shape_str(root.shape()));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    Tensor<T> g = std::move(found->second);
    grads.erase(found);

    if (capture) {
      auto want = capture->find(node);
      if (want != capture->end()) accumulate(want->second, Tensor<T>(g));
    }
    if (node->parents.empty()) {
      if (!capture) accumulate(node->grad, std::move(g));
      continue;
    }
    auto parent_grads = node->backward(*node, g);
    for (size_t i = 0; i < node->parents.size(); ++i) {
      Node<T>* p = node->parents[i].get();
      if (!p->requires_grad || parent_grads[i].empty()) continue;
      accumulate(grads[p], std::move(parent_grads[i]));
    }
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Var<T> Var<T>::from_op(Tensor<T> value, std::vector<Var> inputs, BackwardFn<T> fn) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(inputs.size());
  for (auto& in : inputs) out.node_->parents.push_back(in.node_);
  out.node_->backward = std::move(fn);
  return out;
}

template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed) {
  run_backward<T>(root, seed, nullptr);
}

template <typename T>
std::vector<Tensor<T>> grad(const Var<T>& root, const std::vector<Var<T>>& inputs,
                            const Tensor<T>* seed) {
  std::unordered_map<Node<T>*, Tensor<T>> capture;
  for (const auto& in : inputs) capture.emplace(in.node().get(), Tensor<T>());
  run_backward<T>(root, seed, &capture);
  std::vector<Tensor<T>> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    Tensor<T> g = capture[in.node().get()];
    out.push_back(g.empty() ? Tensor<T>(in.shape(), T{0}) : std::move(g));
  }
  return out;
}

template class Var<float>;
template class Var<double>;
template void backward<float>(const Var<float>&, const Tensor<float>*);
template void backward<double>(const Var<double>&, const Tensor<double>*);
template std::vector<Tensor<float>> grad<float>(const Var<float>&, const std::vector<Var<float>>&,
                                                const Tensor<float>*);
template std::vector<Tensor<double>> grad<double>(const Var<double>&,
                                                  const std::vector<Var<double>>&,
                                                  const Tensor<double>*);

}  // namespace ssgan::ag
