#pragma once

// Reverse-mode differentiation on an explicit tape.
//
// A Tape owns every value produced while recording. Nodes are appended in
// evaluation order, so reverse index order is a valid reverse topological order
// and backward() is a single sweep. Var is a cheap handle (tape pointer + node
// index). The free functions below mirror the Tensor ops in ops.hpp one to one,
// which lets model code be written once as a template over Tensor<T> or Var<T>.

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mamaf/ops.hpp"

namespace mamaf {

template <typename T>
class Tape;

template <typename T>
class Var {
public:
  using Scalar = T;

  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  Index rank() const { return value().rank(); }
  Index dim(Index axis) const { return value().dim(axis); }

private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
public:
  /// Propagates the gradient of node `self` into its inputs.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf; receives a gradient on backward().
  Var<T> parameter(Tensor<T> value, std::string name = {}) {
    return push(std::move(value), {}, nullptr, true, std::move(name));
  }

  /// Non-trainable leaf (inputs, targets).
  Var<T> constant(Tensor<T> value) { return push(std::move(value), {}, nullptr, false, {}); }

  /// Appends an op node. It requires a gradient iff any input does.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, Backward backward) {
    bool needs = false;
    for (std::size_t i : inputs) needs = needs || nodes_[i].requires_grad;
    return push(std::move(value), std::move(inputs), needs ? std::move(backward) : nullptr, needs, {});
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const std::string& name(std::size_t id) const { return nodes_[id].name; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulated for a node, or nullopt if none reached it.
  const std::optional<Tensor<T>>& grad(std::size_t id) const { return grads_[id]; }
  const std::optional<Tensor<T>>& grad(const Var<T>& v) const { return grads_[v.id()]; }

  /// Gradient w.r.t. a parameter; zeros if the loss does not depend on it.
  Tensor<T> grad_or_zero(const Var<T>& v) const {
    const auto& g = grads_[v.id()];
    return g ? *g : Tensor<T>(value(v.id()).shape());
  }

  /// Adds `g` into the gradient slot of node `id`.
  void accumulate(std::size_t id, const Tensor<T>& g) {
    if (!nodes_[id].requires_grad) return;
    require_same_shape(g.shape(), nodes_[id].value.shape(), "gradient accumulation");
    auto& slot = grads_[id];
    if (slot) slot->array() += g.array();
    else slot = g;
  }

  /// Upstream gradient of a node during backward (always present when called).
  const Tensor<T>& upstream(std::size_t id) const { return *grads_[id]; }

  /// Reverse sweep from a scalar loss.
  void backward(const Var<T>& loss) {
    if (loss.value().size() != 1) {
      throw ShapeError("backward: loss must be a scalar, got shape " + loss.shape().str());
    }
    backward(loss, Tensor<T>::constant(loss.shape(), T(1)));
  }

  /// Reverse sweep seeded with an arbitrary upstream gradient for `root`.
  void backward(const Var<T>& root, const Tensor<T>& seed) {
    require_same_shape(seed.shape(), root.shape(), "backward seed");
    for (auto& g : grads_) g.reset();
    grads_[root.id()] = seed;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (!grads_[i] || !n.backward) continue;
      n.backward(*this, i);
    }
  }

private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
    std::string name;
  };

  Var<T> push(Tensor<T> value, std::vector<std::size_t> inputs, Backward backward, bool requires_grad,
              std::string name) {
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), requires_grad, std::move(name)});
    grads_.emplace_back();
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor<T>>> grads_;
};

// ---------------------------------------------------------------------------
// Differentiable ops
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw Error("operands recorded on different tapes");
  return a.tape();
}
}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(add(a.value(), b.value()), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    t.accumulate(ia, t.upstream(self));
    t.accumulate(ib, t.upstream(self));
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(sub(a.value(), b.value()), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    t.accumulate(ia, t.upstream(self));
    if (t.requires_grad(ib)) t.accumulate(ib, scale(t.upstream(self), T(-1)));
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(mul(a.value(), b.value()), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    if (t.requires_grad(ia)) t.accumulate(ia, mul(g, t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, mul(g, t.value(ia)));
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  const std::size_t ia = a.id();
  return a.tape().record(scale(a.value(), s), {ia}, [ia, s](Tape<T>& t, std::size_t self) {
    t.accumulate(ia, scale(t.upstream(self), s));
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  const std::size_t ix = x.id();
  return x.tape().record(relu(x.value()), {ix}, [ix](Tape<T>& t, std::size_t self) {
    t.accumulate(ix, relu_grad(t.value(ix), t.upstream(self)));
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  const std::size_t ix = x.id();
  return x.tape().record(sum(x.value()), {ix}, [ix](Tape<T>& t, std::size_t self) {
    t.accumulate(ix, Tensor<T>::constant(t.value(ix).shape(), t.upstream(self)[0]));
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  const std::size_t ix = x.id();
  return x.tape().record(x.value().reshaped(std::move(shape)), {ix}, [ix](Tape<T>& t, std::size_t self) {
    t.accumulate(ix, t.upstream(self).reshaped(t.value(ix).shape()));
  });
}

template <typename T>
Var<T> flatten(const Var<T>& x) {
  return reshape(x, Shape{x.value().size()});
}

template <typename T>
Var<T> roll_forward(const Var<T>& x) {
  const std::size_t ix = x.id();
  return x.tape().record(roll_forward(x.value()), {ix}, [ix](Tape<T>& t, std::size_t self) {
    t.accumulate(ix, roll_backward(t.upstream(self)));
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x, Index axis = -1) {
  const std::size_t ix = x.id();
  return x.tape().record(softmax(x.value(), axis), {ix}, [ix, axis](Tape<T>& t, std::size_t self) {
    t.accumulate(ix, softmax_grad(t.value(self), t.upstream(self), axis));
  });
}

template <typename T>
Var<T> transpose_last2(const Var<T>& x) {
  const std::size_t ix = x.id();
  return x.tape().record(transpose_last2(x.value()), {ix}, [ix](Tape<T>& t, std::size_t self) {
    t.accumulate(ix, transpose_last2(t.upstream(self)));
  });
}

/// C = op(A) op(B); dA and dB follow from the usual transposed products.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a = false, bool transpose_b = false) {
  auto& tape = detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(matmul(a.value(), b.value(), transpose_a, transpose_b), {ia, ib},
                     [ia, ib, transpose_a, transpose_b](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& g = t.upstream(self);
                       const Tensor<T>& A = t.value(ia);
                       const Tensor<T>& B = t.value(ib);
                       if (t.requires_grad(ia)) {
                         t.accumulate(ia, transpose_a ? matmul(B, g, transpose_b, true)
                                                      : matmul(g, B, false, !transpose_b));
                       }
                       if (t.requires_grad(ib)) {
                         t.accumulate(ib, transpose_b ? matmul(g, A, true, transpose_a)
                                                      : matmul(A, g, !transpose_a, false));
                       }
                     });
}

template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  auto& tape = detail::same_tape(x, bias);
  const std::size_t ix = x.id(), ib = bias.id();
  return tape.record(add_bias(x.value(), bias.value()), {ix, ib}, [ix, ib](Tape<T>& t, std::size_t self) {
    t.accumulate(ix, t.upstream(self));
    if (t.requires_grad(ib)) t.accumulate(ib, sum_to_last_axis(t.upstream(self)));
  });
}

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Stride3 stride,
              Padding padding = Padding::same) {
  auto& tape = detail::same_tape(x, kernel);
  const std::size_t ix = x.id(), ik = kernel.id(), ib = bias.id();
  return tape.record(conv3d(x.value(), kernel.value(), bias.value(), stride, padding), {ix, ik, ib},
                     [ix, ik, ib, stride, padding](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& g = t.upstream(self);
                       if (t.requires_grad(ik) || t.requires_grad(ib)) {
                         auto [dk, db] = conv3d_grad_params(g, t.value(ix), t.value(ik).shape(), stride, padding);
                         t.accumulate(ik, dk);
                         t.accumulate(ib, db);
                       }
                       if (t.requires_grad(ix)) {
                         t.accumulate(ix, conv3d_grad_input(g, t.value(ix).shape(), t.value(ik), stride, padding));
                       }
                     });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, Stride2 stride,
              Padding padding = Padding::same) {
  auto& tape = detail::same_tape(x, kernel);
  const std::size_t ix = x.id(), ik = kernel.id(), ib = bias.id();
  return tape.record(conv2d(x.value(), kernel.value(), bias.value(), stride, padding), {ix, ik, ib},
                     [ix, ik, ib, stride, padding](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& g = t.upstream(self);
                       if (t.requires_grad(ik) || t.requires_grad(ib)) {
                         auto [dk, db] = conv2d_grad_params(g, t.value(ix), t.value(ik).shape(), stride, padding);
                         t.accumulate(ik, dk);
                         t.accumulate(ib, db);
                       }
                       if (t.requires_grad(ix)) {
                         t.accumulate(ix, conv2d_grad_input(g, t.value(ix).shape(), t.value(ik), stride, padding));
                       }
                     });
}

template <typename T>
Var<T> stack(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("stack: no inputs");
  std::vector<Tensor<T>> values;
  std::vector<std::size_t> ids;
  for (const auto& x : xs) {
    detail::same_tape(x, xs[0]);
    values.push_back(x.value());
    ids.push_back(x.id());
  }
  return xs[0].tape().record(stack(values), ids, [ids](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.requires_grad(ids[i])) t.accumulate(ids[i], g.frame(static_cast<Index>(i)).reshaped(t.value(ids[i]).shape()));
    }
  });
}

/// Same composition as the Tensor overload, so gradients flow through the
/// recorded matmul/softmax primitives.
template <typename T>
Var<T> attention(const Var<T>& x) {
  if (x.rank() < 2) throw ShapeError("attention: input must be [..., tokens, d], got " + x.shape().str());
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(x.shape().back()));
  const Var<T> weights = softmax(scale(matmul(x, x, false, true), inv_sqrt_d), -1);
  return matmul(weights, x);
}

}  // namespace mamaf
