#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "chargenet/numeric/tensor.hpp"

namespace chargenet {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  const std::vector<double>& grad() const;
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order so the
/// record is topologically sorted by construction; backward() walks it in
/// exact reverse. Parameters bound with param() keep a pointer to the
/// owning Tensor and receive accumulated gradients when backward() finishes.
///
/// A Tape is single-threaded. Rebuild one per forward pass (or per batch).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    Tensor* param = nullptr;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a leaf. Gradients of a leaf stay on the tape (see Var::grad).
  Var leaf(Tensor value, bool requires_grad = false) {
    Node n;
    n.requires_grad = requires_grad || value.requires_grad;
    n.value = std::move(value);
    n.value.requires_grad = n.requires_grad;
    n.value.grad.clear();
    return push(std::move(n));
  }

  Var constant(Tensor value) {
    value.requires_grad = false;
    return leaf(std::move(value), false);
  }

  /// Binds an externally owned parameter. Its gradient is added into
  /// `p.grad` at the end of backward() when `p.requires_grad` is set.
  Var param(Tensor& p) {
    Node n;
    n.value.shape = p.shape;
    n.value.data = p.data;
    n.requires_grad = p.requires_grad;
    n.param = p.requires_grad ? &p : nullptr;
    return push(std::move(n));
  }

  /// Records an operation result. `backward` is only kept when at least one
  /// input requires a gradient.
  Var op(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* name) {
    return op(std::move(value), std::vector<Var>(inputs), std::move(backward), name);
  }

  Var op(Tensor value, const std::vector<Var>& inputs, BackwardFn backward, const char* name) {
    check_finite(value, name);
    bool rg = false;
    for (const Var& v : inputs) rg = rg || nodes_[v.id].requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    if (rg) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<double>& grad(std::size_t id) const { return nodes_[id].grad; }

  /// Gradient buffer of node `id`, allocated on first use. Only valid for
  /// nodes that require a gradient; callers check requires_grad first.
  std::vector<double>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.data.size()) n.grad.assign(n.value.data.size(), 0.0);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar loss.
  void backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
    if (nodes_.empty()) throw ContractError("backward: empty tape");
    if (nodes_[loss.id].value.size() != 1)
      throw ContractError("backward: loss must be a scalar, got shape " +
                          shape_str(nodes_[loss.id].value.shape));
    if (!nodes_[loss.id].requires_grad) return;
    grad_buffer(loss.id)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) {
        Tensor& p = *n.param;
        if (!p.has_grad()) p.zero_grad();
        for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[k] += n.grad[k];
      }
    }
  }

 private:
  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;  // deque: references to values stay valid as the tape grows
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }
inline const std::vector<double>& Var::grad() const { return tape->grad(id); }

}  // namespace chargenet
