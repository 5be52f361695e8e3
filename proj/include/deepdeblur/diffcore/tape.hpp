#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "deepdeblur/diffcore/tensor.hpp"

namespace deepdeblur::diff {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// owning Tape is alive and has not been cleared.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  float item() const { return value().item(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of primitive operations. Nodes are stored in creation
// order, so parents always precede children and a reverse sweep is a valid
// topological traversal.
class Tape {
 public:
  // Receives the gradient flowing into the node and pushes contributions to
  // the node's parents through Tape::accumulate.
  using Backprop = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records an op result. The node requires grad iff any parent does; when none
  // does, `backprop` is dropped.
  Var record(Tensor value, const std::vector<Var>& parents, Backprop backprop);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  // Populates gradients of `loss` (single element) w.r.t. every node that
  // requires grad. Previous gradients are discarded.
  void backward(Var loss);

  // Gradient from the last backward(); zeros for nodes the loss never reached.
  Tensor grad(Var v) const;

  // Adds `fn(buffer)` into the gradient buffer of `target`, creating it zeroed
  // on first use. No-op when `target` does not require grad.
  template <typename Fn>
  void accumulate(Var target, Fn&& fn) {
    Node& node = nodes_.at(target.id());
    if (!node.requires_grad) return;
    if (node.grad.empty()) node.grad = Tensor::zeros_like(node.value);
    fn(node.grad);
  }
  bool needs_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() noexcept { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backprop backprop;
  };

  std::vector<Node> nodes_;
};

}  // namespace deepdeblur::diff
