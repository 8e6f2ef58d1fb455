// SPDX-License-Identifier: Apache-2.0
#pragma once

// Tape-based reverse-mode differentiation over rank-2 tensors.
//
// A Tape owns every intermediate value of one computation. Var is a cheap
// handle (tape pointer + node index); nodes are appended in evaluation order,
// so parents always precede children and backward() is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "immfm/tensor.hpp"

namespace immfm::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives no gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is accumulated by backward().
  Var variable(Tensor value);

  /// Records the output of a primitive. Used by the op implementations.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

  /// Reverse sweep from a 1 x 1 loss. Resets all previous gradients.
  void backward(Var loss);

  const Tensor& value(std::size_t i) const { return nodes_[i].value; }
  const Tensor& grad(std::size_t i) const { return nodes_[i].grad; }
  Tensor& grad_mut(std::size_t i) { return nodes_[i].grad; }
  bool needs_grad(std::size_t i) const { return nodes_[i].requires_grad; }
  const std::vector<std::size_t>& parents(std::size_t i) const { return nodes_[i].parents; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Elementwise binary ops require identical shapes; use broadcast_rows/cols first.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var matmul(Var a, Var b);

/// Sum of all entries -> 1 x 1.
Var sum(Var a);
/// Mean of all entries -> 1 x 1.
Var mean(Var a);
/// Row-wise sum: n x m -> n x 1.
Var sum_cols(Var a);

Var tanh(Var a);
Var relu(Var a);
Var softplus(Var a);
Var square(Var a);
Var sin(Var a);
Var cos(Var a);
Var exp(Var a);

/// Horizontal concatenation of tensors with equal row counts.
Var concat_cols(std::span<const Var> parts);
/// 1 x m -> rows x m.
Var broadcast_rows(Var a, std::size_t rows);
/// n x 1 -> n x cols.
Var broadcast_cols(Var a, std::size_t cols);
/// Columns [begin, begin + count).
Var slice_cols(Var a, std::size_t begin, std::size_t count);

}  // namespace immfm::ad
