#include "deepdeblur/diffcore/tape.hpp"

#include "deepdeblur/errors.hpp"

namespace deepdeblur::diff {

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("use of an unbound Var");
  return tape_->value(*this);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, Backprop backprop) {
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw UsageError("operands recorded on different tapes");
    needs = needs || nodes_.at(p.id()).requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(backprop) : nullptr});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id()).value; }

bool Tape::requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw UsageError("loss belongs to a different tape");
  const Tensor& lv = nodes_.at(loss.id()).value;
  if (lv.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_str(lv.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor{};
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad = Tensor(lv.shape(), 1.0f);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backprop || n.grad.empty()) continue;
    // Backprop only touches earlier nodes, so `n` stays put while it runs.
    Tensor g = std::move(n.grad);
    n.backprop(*this, g);
    nodes_[i].grad = std::move(g);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor::zeros_like(n.value);
  return n.grad;
}

}  // namespace deepdeblur::diff
