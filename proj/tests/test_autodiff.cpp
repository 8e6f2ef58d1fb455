// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"

#include "immfm/autodiff.hpp"
#include "immfm/error.hpp"
#include "immfm/rng.hpp"

using namespace immfm;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(r, c);
  for (auto& x : t.data()) x = uniform(rng, lo, hi);
  return t;
}

using Builder = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

// Largest relative gap between reverse-mode and central-difference gradients.
double gradient_gap(const Builder& build, std::vector<Tensor> inputs, double h = 1e-5) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  const ad::Var loss = build(tape, vars);
  tape.backward(loss);

  auto eval = [&](const std::vector<Tensor>& in) {
    ad::Tape t2;
    std::vector<ad::Var> v2;
    for (const auto& t : in) v2.push_back(t2.constant(t));
    return build(t2, v2).value().item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
      const double an = vars[k].grad()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and matrix forward values") {
  ad::Tape tape;
  const auto a = tape.constant(Tensor::from_rows({{1, 2}}));
  const auto b = tape.constant(Tensor::from_rows({{3, 4}}));
  CHECK(ad::add(a, b).value() == Tensor::from_rows({{4, 6}}));

  Rng rng = make_stream(1, 0);
  const Tensor m = random_tensor(3, 5, rng);
  const auto prod = ad::matmul(tape.constant(Tensor::identity(3)), tape.constant(m));
  CHECK(prod.value() == m);

  const auto sp = ad::softplus(tape.constant(Tensor::scalar(0.0)));
  CHECK(sp.value().item() == doctest::Approx(0.693147).epsilon(1e-6));
}

TEST_CASE("shape mismatch reports both shapes") {
  ad::Tape tape;
  const auto a = tape.constant(Tensor(2, 3));
  const auto b = tape.constant(Tensor(3, 2));
  try {
    ad::add(a, b);
    FAIL("expected a DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("3x2") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::matmul(a, a), DimensionError);
  CHECK_THROWS_AS(Tensor(0, 3), DimensionError);
}

TEST_CASE("backward on simple derivatives") {
  ad::Tape tape;
  const auto x = tape.variable(Tensor::scalar(3.0));
  tape.backward(ad::square(x));
  CHECK(x.grad().item() == doctest::Approx(6.0));

  ad::Tape t2;
  const auto y = t2.variable(Tensor::scalar(0.0));
  const auto unused = t2.variable(Tensor::scalar(5.0));
  const auto loss = ad::softplus(y);
  t2.backward(loss);
  CHECK(y.grad().item() == doctest::Approx(0.5));
  CHECK(unused.grad().item() == 0.0);
  CHECK(loss.grad().item() == 1.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  ad::Tape tape;
  const auto x = tape.variable(Tensor(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(ad::square(x)), ContractError);
}

TEST_CASE("mean of W x matches finite differences") {
  Rng rng = make_stream(2, 0);
  const double gap = gradient_gap(
      [](ad::Tape&, std::vector<ad::Var>& v) { return ad::mean(ad::matmul(v[0], v[1])); },
      {random_tensor(2, 2, rng), random_tensor(2, 1, rng)});
  CHECK(gap < 1e-6);
}

TEST_CASE("every primitive matches central differences") {
  Rng rng = make_stream(3, 0);
  struct Case {
    const char* name;
    Builder build;
    std::vector<Tensor> inputs;
  };
  const Tensor a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng);
  const Tensor w = random_tensor(4, 2, rng);
  const Tensor weights = random_tensor(3, 4, rng);
  // Weighted sums make the loss sensitive to every output entry.
  auto weighted = [weights](ad::Tape& t, ad::Var y) {
    return ad::sum(ad::mul(y, t.constant(weights)));
  };
  std::vector<Case> cases = {
      {"add", [&](ad::Tape& t, auto& v) { return weighted(t, ad::add(v[0], v[1])); }, {a, b}},
      {"sub", [&](ad::Tape& t, auto& v) { return weighted(t, ad::sub(v[0], v[1])); }, {a, b}},
      {"mul", [&](ad::Tape& t, auto& v) { return weighted(t, ad::mul(v[0], v[1])); }, {a, b}},
      {"scale", [&](ad::Tape& t, auto& v) { return weighted(t, ad::scale(v[0], -1.7)); }, {a}},
      {"add_scalar", [&](ad::Tape& t, auto& v) { return weighted(t, ad::square(ad::add_scalar(v[0], 0.3))); }, {a}},
      {"matmul", [&](ad::Tape&, auto& v) { return ad::sum(ad::square(ad::matmul(v[0], v[1]))); }, {a, w}},
      {"sum", [&](ad::Tape&, auto& v) { return ad::square(ad::sum(v[0])); }, {a}},
      {"mean", [&](ad::Tape&, auto& v) { return ad::square(ad::mean(v[0])); }, {a}},
      {"sum_cols", [&](ad::Tape&, auto& v) { return ad::sum(ad::square(ad::sum_cols(v[0]))); }, {a}},
      {"tanh", [&](ad::Tape& t, auto& v) { return weighted(t, ad::tanh(v[0])); }, {a}},
      {"softplus", [&](ad::Tape& t, auto& v) { return weighted(t, ad::softplus(v[0])); }, {a}},
      {"square", [&](ad::Tape& t, auto& v) { return weighted(t, ad::square(v[0])); }, {a}},
      {"sin", [&](ad::Tape& t, auto& v) { return weighted(t, ad::sin(v[0])); }, {a}},
      {"cos", [&](ad::Tape& t, auto& v) { return weighted(t, ad::cos(v[0])); }, {a}},
      {"exp", [&](ad::Tape& t, auto& v) { return weighted(t, ad::exp(v[0])); }, {a}},
      {"concat", [&](ad::Tape&, auto& v) {
         const ad::Var parts[] = {v[0], v[1]};
         return ad::sum(ad::square(ad::concat_cols(parts)));
       }, {a, random_tensor(3, 2, rng)}},
      {"broadcast_rows", [&](ad::Tape& t, auto& v) { return weighted(t, ad::square(ad::broadcast_rows(v[0], 3))); },
       {random_tensor(1, 4, rng)}},
      {"broadcast_cols", [&](ad::Tape& t, auto& v) { return weighted(t, ad::square(ad::broadcast_cols(v[0], 4))); },
       {random_tensor(3, 1, rng)}},
      {"slice", [&](ad::Tape&, auto& v) { return ad::sum(ad::square(ad::slice_cols(v[0], 1, 2))); }, {a}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(gradient_gap(c.build, c.inputs) < 1e-4);
  }

  // relu away from its kink.
  Tensor r = random_tensor(3, 4, rng);
  for (auto& x : r.data()) x = x >= 0 ? x + 0.1 : x - 0.1;
  CHECK(gradient_gap([&](ad::Tape& t, auto& v) { return weighted(t, ad::relu(v[0])); }, {r}) < 1e-4);
}

TEST_CASE("softplus is stable for large inputs") {
  ad::Tape tape;
  const auto x = tape.variable(Tensor::from_rows({{800.0, -800.0}}));
  const auto y = ad::softplus(x);
  CHECK(y.value()(0, 0) == doctest::Approx(800.0));
  CHECK(y.value()(0, 1) >= 0.0);
  tape.backward(ad::sum(y));
  CHECK(x.grad()(0, 0) == doctest::Approx(1.0));
  CHECK(x.grad()(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("repeated computation is bit identical") {
  auto run = [] {
    Rng rng = make_stream(9, 0);
    ad::Tape tape;
    const auto a = tape.variable(random_tensor(16, 32, rng));
    const auto b = tape.variable(random_tensor(32, 8, rng));
    const auto loss = ad::mean(ad::tanh(ad::matmul(a, b)));
    tape.backward(loss);
    return std::make_pair(loss.value(), a.grad());
  };
  const auto r1 = run();
  const auto r2 = run();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}
