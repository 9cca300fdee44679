#include "facenet/autograd.hpp"

#include <unordered_set>

#include "facenet/errors.hpp"

namespace facenet {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_op(Tensor value, std::vector<Var> parents, BackwardFn fn) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(fn);
  return out;
}

const Tensor& Var::value() const {
  if (!node_) throw Error("use of undefined Var");
  return node_->value;
}

Tensor& Var::value_mut() {
  if (!node_) throw Error("use of undefined Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

bool Var::has_grad() const { return node_ && !node_->grad.empty(); }

const Tensor& Var::grad() const {
  if (!node_) throw Error("use of undefined Var");
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

void Var::backward() const {
  if (!node_) throw Error("backward on undefined Var");
  if (node_->value.numel() != 1) {
    throw ShapeError("backward requires a single-element result, got " + shape_string(node_->value.shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order with parents first.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch; only leaves keep theirs across calls.
  for (auto* n : order) {
    if (n->backward) n->grad = Tensor();
  }
  node_->grad = Tensor(node_->value.shape(), 1.0);

  std::vector<Tensor*> parent_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->backward || n->grad.empty()) continue;
    parent_grads.assign(n->parents.size(), nullptr);
    for (std::size_t i = 0; i < n->parents.size(); ++i) {
      auto& p = *n->parents[i];
      if (!p.requires_grad) continue;
      if (p.grad.empty()) p.grad = Tensor(p.value.shape(), 0.0);
      parent_grads[i] = &p.grad;
    }
    n->backward(n->grad, parent_grads);
    if (n != node_.get()) n->grad = Tensor();
  }
}

}  // namespace facenet
