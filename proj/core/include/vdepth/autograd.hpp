#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vdepth/tensor.hpp"

namespace vdepth {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient storage, zero-filled to the value's shape on first use.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Whether ops record the graph on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handle to a value in the reverse-mode graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  T item() const { return node_->value[0]; }

  void zero_grad() { node_->grad = Tensor<T>(); }

  /// Reverse sweep from a scalar; frees the intermediate graph afterwards.
  void backward() const;

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Wraps an op result. The backward closure receives the output node; it
/// reads out.grad and accumulates into out.inputs[i]->grad_buffer() for the
/// inputs that require gradients. Nothing is recorded under NoGradGuard.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward);

}  // namespace vdepth
