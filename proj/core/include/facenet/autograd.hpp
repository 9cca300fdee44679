#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "facenet/tensor.hpp"

namespace facenet {

/// Accumulates the gradient of one result into the gradients of its parents.
/// `parent_grads[i]` is null when parent i does not require a gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::vector<Tensor*>& parent_grads)>;

namespace detail {
struct Node;
}

/// Handle to a value in the reverse-mode tape. Copies share the same node, so a
/// parameter Var held by a module and by the optimizer refer to one tensor.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  /// Builds an interior node. When no parent requires a gradient (or gradient
  /// recording is disabled) the result is a plain constant and `fn` is dropped.
  static Var from_op(Tensor value, std::vector<Var> parents, BackwardFn fn);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  /// Direct write access, for optimizers and weight loading.
  Tensor& value_mut();
  const Shape& shape() const { return value().shape(); }

  bool requires_grad() const;
  bool has_grad() const;
  const Tensor& grad() const;
  void zero_grad();

  /// Reverse sweep from a single-element result, seeding d(out)/d(out) = 1.
  void backward() const;

  /// Same value, no history.
  Var detach() const { return Var(value(), false); }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace facenet
