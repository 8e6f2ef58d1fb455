// SPDX-License-Identifier: Apache-2.0
#include "immfm/autodiff.hpp"

#include <cmath>

#include "immfm/error.hpp"
#include "immfm/kernels.hpp"

namespace immfm::ad {

const Tensor& Var::value() const { return tape->value(index); }
const Tensor& Var::grad() const { return tape->grad(index); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, {}, nullptr, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool tracked = false;
  for (std::size_t p : parents) tracked = tracked || nodes_[p].requires_grad;
  if (!tracked) backward = nullptr;
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(parents), std::move(backward),
                        tracked});
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
  const Tensor& lv = nodes_[loss.index].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be scalar, got " + lv.shape_string());
  }
  for (auto& node : nodes_) {
    node.grad = Tensor(node.value.rows(), node.value.cols(), 0.0);
  }
  nodes_[loss.index].grad[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.requires_grad && node.backward) node.backward(*this, i);
  }
}

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

// Elementwise unary op: f(x) forward, df(x, y) local derivative.
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ai = a.index;
  return a.tape->record(std::move(y), {ai}, [ai, df](Tape& t, std::size_t self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& x = t.value(ai);
    const Tensor& y = t.value(self);
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad_mut(ai);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * df(x[i], y[i]);
  });
}

void accumulate(Tensor& dst, const Tensor& src, double factor = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const std::size_t ai = a.index, bi = b.index;
  return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    if (t.needs_grad(ai)) accumulate(t.grad_mut(ai), t.grad(self));
    if (t.needs_grad(bi)) accumulate(t.grad_mut(bi), t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::size_t ai = a.index, bi = b.index;
  return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    if (t.needs_grad(ai)) accumulate(t.grad_mut(ai), t.grad(self));
    if (t.needs_grad(bi)) accumulate(t.grad_mut(bi), t.grad(self), -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::size_t ai = a.index, bi = b.index;
  return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    if (t.needs_grad(ai)) {
      Tensor& ga = t.grad_mut(ai);
      const Tensor& bv = t.value(bi);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (t.needs_grad(bi)) {
      Tensor& gb = t.grad_mut(bi);
      const Tensor& av = t.value(ai);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= factor;
  const std::size_t ai = a.index;
  return a.tape->record(std::move(y), {ai}, [ai, factor](Tape& t, std::size_t self) {
    if (t.needs_grad(ai)) accumulate(t.grad_mut(ai), t.grad(self), factor);
  });
}

Var add_scalar(Var a, double offset) {
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += offset;
  const std::size_t ai = a.index;
  return a.tape->record(std::move(y), {ai}, [ai](Tape& t, std::size_t self) {
    if (t.needs_grad(ai)) accumulate(t.grad_mut(ai), t.grad(self));
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: shape mismatch " + av.shape_string() + " * " +
                         bv.shape_string());
  }
  Tensor y(av.rows(), bv.cols());
  kernels::gemm(kernels::Transpose::no, kernels::Transpose::no, av, bv, y, false);
  const std::size_t ai = a.index, bi = b.index;
  return a.tape->record(std::move(y), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    using kernels::Transpose;
    const Tensor& gy = t.grad(self);
    if (t.needs_grad(ai)) kernels::gemm(Transpose::no, Transpose::yes, gy, t.value(bi),
                                        t.grad_mut(ai), true);
    if (t.needs_grad(bi)) kernels::gemm(Transpose::yes, Transpose::no, t.value(ai), gy,
                                        t.grad_mut(bi), true);
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  const std::size_t ai = a.index;
  return a.tape->record(Tensor::scalar(s), {ai}, [ai](Tape& t, std::size_t self) {
    if (!t.needs_grad(ai)) return;
    const double g = t.grad(self)[0];
    Tensor& gx = t.grad_mut(ai);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_cols(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    y(r, 0) = s;
  }
  const std::size_t ai = a.index;
  return a.tape->record(std::move(y), {ai}, [ai](Tape& t, std::size_t self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad_mut(ai);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += gy(r, 0);
  });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        // logistic sigmoid, evaluated without overflow
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sin(Var a) {
  return unary(
      a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(Var a) {
  return unary(
      a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + parts[0].value().shape_string() +
                           " vs " + p.value().shape_string());
    }
    cols += p.value().cols();
  }
  Tensor y(rows, cols);
  std::vector<std::size_t> indices;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) y(r, offset + c) = x(r, c);
    offset += x.cols();
    indices.push_back(p.index);
  }
  std::vector<std::size_t> parents = indices;
  return parts[0].tape->record(
      std::move(y), std::move(parents), [indices](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t pi : indices) {
          const std::size_t w = t.value(pi).cols();
          if (t.needs_grad(pi)) {
            Tensor& gx = t.grad_mut(pi);
            for (std::size_t r = 0; r < gx.rows(); ++r)
              for (std::size_t c = 0; c < w; ++c) gx(r, c) += gy(r, offset + c);
          }
          offset += w;
        }
      });
}

Var broadcast_rows(Var a, std::size_t rows) {
  const Tensor& x = a.value();
  if (x.rows() != 1) throw DimensionError("broadcast_rows: expected 1 x m, got " +
                                          x.shape_string());
  Tensor y(rows, x.cols());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(0, c);
  const std::size_t ai = a.index;
  return a.tape->record(std::move(y), {ai}, [ai](Tape& t, std::size_t self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad_mut(ai);
    for (std::size_t r = 0; r < gy.rows(); ++r)
      for (std::size_t c = 0; c < gy.cols(); ++c) gx(0, c) += gy(r, c);
  });
}

Var broadcast_cols(Var a, std::size_t cols) {
  const Tensor& x = a.value();
  if (x.cols() != 1) throw DimensionError("broadcast_cols: expected n x 1, got " +
                                          x.shape_string());
  Tensor y(x.rows(), cols);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) y(r, c) = x(r, 0);
  const std::size_t ai = a.index;
  return a.tape->record(std::move(y), {ai}, [ai](Tape& t, std::size_t self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad_mut(ai);
    for (std::size_t r = 0; r < gy.rows(); ++r)
      for (std::size_t c = 0; c < gy.cols(); ++c) gx(r, 0) += gy(r, c);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  if (count == 0 || begin + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         x.shape_string());
  }
  Tensor y(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) y(r, c) = x(r, begin + c);
  const std::size_t ai = a.index;
  return a.tape->record(std::move(y), {ai}, [ai, begin](Tape& t, std::size_t self) {
    if (!t.needs_grad(ai)) return;
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad_mut(ai);
    for (std::size_t r = 0; r < gy.rows(); ++r)
      for (std::size_t c = 0; c < gy.cols(); ++c) gx(r, begin + c) += gy(r, c);
  });
}

}  // namespace immfm::ad
