#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "goalnav/nn/tensor.hpp"

namespace goalnav::nn {

template <typename T>
struct Node {
  BasicTensor<T> value;
  BasicTensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  /// Zero-filled gradient buffer of the value's shape, created on demand.
  BasicTensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = BasicTensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const { return !grad.empty() || value.empty(); }
};

/// Whether operations currently record a tape. Thread-local so rollout
/// workers can run inference while the learner records.
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

/// Handle to a node of the computation graph. Cheap to copy.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(BasicTensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const BasicTensor<T>& value() const { return node_->value; }
  BasicTensor<T>& mutable_value() { return node_->value; }
  const BasicTensor<T>& grad() const { return node_->grad_buffer(); }
  BasicTensor<T>& mutable_grad() { return node_->grad_buffer(); }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad = BasicTensor<T>(); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Scalar value of a single-element tensor.
  T item() const {
    if (node_->value.size() != 1) {
      throw ConfigurationError("item() on tensor of shape " +
                               shape_string(shape()));
    }
    return node_->value[0];
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds a result node. When no input requires a gradient (or grad mode is
/// off) the tape is not extended and `backward_fn` is dropped.
template <typename T>
Var<T> make_result(BasicTensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->is_leaf = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; intermediate gradients are recomputed each call.
template <typename T>
void backward(const Var<T>& loss);

}  // namespace goalnav::nn
