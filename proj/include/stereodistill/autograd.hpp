#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "stereodistill/tensor.hpp"

namespace stereodistill {

/// One value in the recorded computation. Non-leaf nodes carry a backward
/// function that reads `grad` and accumulates into the inputs' grads.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  /// Grad buffer of matching shape, zero-initialised on first use.
  Tensor& grad_buffer();
};

/// Handle to a node in the tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(int axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();
  /// Copy of the value with no history.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

  /// Creates a result node. History is recorded only when grad mode is on and
  /// some input requires grad; otherwise `backward` is dropped.
  static Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables recording for the guard's lifetime (teacher passes, evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse-mode sweep from a scalar root; seeds d(root)/d(root) = 1.
void backward(const Var& root);

}  // namespace stereodistill
