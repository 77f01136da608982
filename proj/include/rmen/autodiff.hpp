#pragma once

// Reverse-mode automatic differentiation over dense Tensors.
//
// A Tape records every primitive applied to its variables in creation order,
// so parents always precede children and a single reverse sweep is a valid
// topological traversal. Variables are cheap handles (tape pointer + node id).
// A tape and its variables belong to one thread.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rmen/tensor.hpp"

namespace rmen {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  // Receives the gradient flowing into the node being differentiated.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  // Leaf whose value lives outside the tape; `value` must outlive the tape.
  Var borrow(const Tensor& value, bool requires_grad = true);

  const Tensor& value(Var v) const { return value(v.id); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient of the last backward root with respect to `v`. Only valid after
  // backward(); leaves that took no part in the root get zeros.
  const Tensor& grad(Var v) const;

  // Populates gradients for every requires_grad node reachable from `root`.
  // Throws ContractError if root is not a single element or if called twice
  // without zero_grad().
  void backward(Var root);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

  // Used by primitive implementations.
  Var record(Tensor value, std::vector<std::uint32_t> parents, BackwardFn backward, const char* op);
  const Tensor& value(std::uint32_t id) const;
  // Gradient buffer for `id`, zero-initialised on first use; nullptr if the
  // node does not require a gradient.
  Tensor* grad_target(std::uint32_t id);

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    Tensor grad;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Matrix product of [p x q] and [q x r].
Var matmul(Var a, Var b);
Var transpose(Var a);

// Elementwise ops. Binary ops need identical shapes, or one operand holding
// a single element (tensor-scalar).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);  // subgradient 0 at 0
Var sigmoid(Var a);
Var tanh(Var a);
Var abs(Var a);
// log(1 + exp(a)), switching to `a` itself above 30.
Var softplus(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Reductions, all returning shape {1}.
Var sum(Var a);
Var dot(Var a, Var b);
Var l2_norm(Var a);

// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);

// Valid convolution of Y [k x c] with filters [F x m x c]; each window spans
// all c columns. Result [F x (k - m + 1)].
Var conv_columns(Var input, Var filters);

struct MaxPoolResult {
  Var value;  // shape {1}
  std::size_t argmax;
};
// Maximum of all elements; the first index wins ties.
MaxPoolResult max_pool(Var v);
// Per-row maximum of [p x L], giving [p x 1].
Var max_pool_rows(Var a);

// Normalises each row of [p x k] (a rank-1 [k] input is one row) to zero mean
// and unit variance, then applies gain and bias (k elements each).
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-6);

// Row `row` of a [n x d] table as a [1 x d] row vector.
Var gather_row(Var table, std::size_t row);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
// Repeats a [1 x k] row `times` times.
Var tile_rows(Var a, std::size_t times);
// Column-wise mean of [p x k], giving [1 x k].
Var mean_rows(Var a);
Var reshape(Var a, Shape shape);

}  // namespace rmen
