#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "svt/ndarray.hpp"

namespace svt {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const NdArray<T>& value() const { return tape->value(id); }
  const NdArray<T>& grad() const { return tape->grad(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
};

// Linear record of forward operations. Nodes are appended in evaluation
// order, so reverse insertion order is a valid reverse topological order.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(NdArray<T> value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, false, nullptr});
    return {this, nodes_.size() - 1};
  }

  // Records an op output. The backward rule is kept only when some input
  // requires a gradient.
  Var<T> record(NdArray<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : nullptr});
    return {this, nodes_.size() - 1};
  }

  Var<T> record(NdArray<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : nullptr});
    return {this, nodes_.size() - 1};
  }

  const NdArray<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

  // Gradient accumulator for a node, zero-initialised on first access.
  NdArray<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = NdArray<T>(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }
  const NdArray<T>& grad(std::size_t id) const {
    static const NdArray<T> kEmpty;
    return nodes_[id].has_grad ? nodes_[id].grad : kEmpty;
  }

  void zero_grad() {
    for (auto& n : nodes_) {
      n.grad = NdArray<T>();
      n.has_grad = false;
    }
  }

  // Clears previous gradients, seeds `root` and propagates to every node that
  // requires a gradient. May be called repeatedly with different seeds.
  void backward(Var<T> root, const NdArray<T>& seed) {
    if (seed.shape() != value(root.id).shape()) throw DimensionError("backward seed shape mismatch");
    zero_grad();
    grad(root.id) = seed;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, i);
    }
  }

  void backward(Var<T> root) { backward(root, NdArray<T>(value(root.id).shape(), T{1})); }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    NdArray<T> value;
    NdArray<T> grad;
    bool requires_grad;
    bool has_grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace svt
