#include "vdepth/autograd.hpp"

#include <unordered_set>

namespace vdepth {
namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
void Var<T>::backward() const {
  VDEPTH_REQUIRE(node_ && node_->value.size() == 1, "backward() needs a scalar root");
  if (!node_->requires_grad) return;

  // Post-order DFS gives a topological order (inputs before consumers).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* child = n->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node<T>* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->inputs.clear();
    }
  }
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) node->inputs.push_back(in.node());
    }
  }
  return Var<T>(std::move(node));
}

template class Var<float>;
template class Var<double>;
template Var<float> make_result(Tensor<float>, std::vector<Var<float>>, std::function<void(Node<float>&)>);
template Var<double> make_result(Tensor<double>, std::vector<Var<double>>, std::function<void(Node<double>&)>);

}  // namespace vdepth
