// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"

#include "immfm/error.hpp"
#include "immfm/rng.hpp"
#include "immfm/paths.hpp"

using namespace immfm;
using paths::PathSegment;

namespace {

PathSegment example_segment(double sigma0 = 0.1) {
  PathSegment s;
  s.t_i = 0.0;
  s.t_next = 1.0;
  s.t_after = 2.0;
  s.x_i = {0.0};
  s.x_next = {1.0};
  s.x_after = {3.0};
  s.sigma0 = sigma0;
  return s;
}

PathSegment random_segment(Rng& rng, std::size_t d, bool look_ahead) {
  PathSegment s;
  s.t_i = uniform(rng, 0.0, 0.4);
  s.t_next = s.t_i + uniform(rng, 0.05, 0.3);
  if (look_ahead) s.t_after = s.t_next + uniform(rng, 0.05, 0.3);
  s.x_i.resize(d);
  s.x_next.resize(d);
  for (auto& x : s.x_i) x = uniform(rng, -1, 1);
  for (auto& x : s.x_next) x = uniform(rng, -1, 1);
  if (look_ahead) {
    s.x_after = Vec(d);
    for (auto& x : *s.x_after) x = uniform(rng, -1, 1);
  }
  s.sigma0 = uniform(rng, 0.05, 1.0);
  return s;
}

}  // namespace

TEST_CASE("midpoint of the worked example") {
  const auto seg = example_segment();
  const auto e = paths::evaluate(seg, 0.5);
  CHECK(e.alpha == doctest::Approx(0.5));
  CHECK(e.mu[0] == doctest::Approx(0.375));
  CHECK(e.mu_prime[0] == doctest::Approx(1.0));
  CHECK(e.sigma == doctest::Approx(0.25 * 0.1));
  CHECK(e.sigma_prime == doctest::Approx(0.0));
}

TEST_CASE("evaluate rejects closed endpoints and outside times") {
  const auto seg = example_segment();
  CHECK_THROWS_AS(paths::evaluate(seg, 0.0), DomainError);
  CHECK_THROWS_AS(paths::evaluate(seg, 1.0), DomainError);
  CHECK_THROWS_AS(paths::evaluate(seg, 1.5), DomainError);
}

TEST_CASE("endpoint limits and uniform motion") {
  const auto seg = example_segment();
  const auto near = paths::evaluate(seg, 1e-9);
  CHECK(near.mu[0] == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(near.sigma < 1e-9);

  PathSegment lin = example_segment();
  lin.x_after = {2.0};  // v_next == v_i
  for (double t : {0.1, 0.37, 0.9}) {
    CHECK(paths::evaluate(lin, t).mu[0] == doctest::Approx(t).epsilon(1e-15));
    CHECK(paths::target_velocity(lin, t, paths::evaluate(lin, t).mu)[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("last segment falls back to its own velocity") {
  PathSegment s = example_segment();
  s.t_after.reset();
  s.x_after.reset();
  CHECK(s.next_velocity() == s.velocity());
  PathSegment linear = example_segment();
  linear.kind = paths::PathKind::linear;
  CHECK(linear.next_velocity() == linear.velocity());
}

TEST_CASE("target velocity examples") {
  const auto seg = example_segment(1.0);
  const auto mid = paths::evaluate(seg, 0.5);
  CHECK(paths::target_velocity(seg, 0.5, mid.mu)[0] == doctest::Approx(1.0));

  const auto q = paths::evaluate(seg, 0.25);
  CHECK(q.sigma_prime / q.sigma == doctest::Approx(8.0 / 3.0));
  const double v = paths::target_velocity(seg, 0.25, {q.mu[0] + 1.0})[0];
  CHECK(v == doctest::Approx(q.mu_prime[0] + 8.0 / 3.0));
}

TEST_CASE("target score examples") {
  const auto seg = example_segment(1.0);
  const auto mid = paths::evaluate(seg, 0.5);
  CHECK(paths::target_score(seg, 0.5, mid.mu)[0] == 0.0);
  CHECK(paths::target_score(seg, 0.5, {0.5})[0] == doctest::Approx(-2.0));
  const double s1 = paths::target_score(seg, 0.5, {mid.mu[0] + 0.1})[0];
  const double s3 = paths::target_score(seg, 0.5, {mid.mu[0] + 0.3})[0];
  CHECK(s3 == doctest::Approx(3.0 * s1));
}

TEST_CASE("sigma is clamped where divided by") {
  const auto seg = example_segment();
  const double t = 1e-12;
  const Vec x{paths::evaluate(seg, t).mu[0] + 1e-3};
  const double s = paths::target_score(seg, t, x)[0];
  CHECK(std::isfinite(s));
  CHECK(std::abs(s) <= 1e-3 / (seg.sigma_min() * seg.sigma_min()) * (1 + 1e-12));
  CHECK(std::isfinite(paths::target_velocity(seg, t, x)[0]));
}

TEST_CASE("zero sigma0 sampling is deterministic") {
  auto seg = example_segment(0.0);
  Rng rng = make_stream(4, 0);
  CHECK(paths::sample_path_point(seg, 0.3, rng) == paths::evaluate(seg, 0.3).mu);
}

TEST_CASE("sample moments at a fixed time") {
  const auto seg = example_segment(0.5);
  Rng rng = make_stream(5, 0);
  const double t = 0.4;
  const auto e = paths::evaluate(seg, t);
  const int n = 100000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = paths::sample_path_point(seg, t, rng)[0];
    m += x;
    m2 += x * x;
  }
  m /= n;
  const double var = m2 / n - m * m;
  CHECK(std::abs(m - e.mu[0]) < 4.0 * e.sigma / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var / (e.sigma * e.sigma) - 1.0) < 0.05);
}

TEST_CASE("mean interpolates the observations") {
  Rng rng = make_stream(6, 0);
  for (int k = 0; k < 200; ++k) {
    const auto seg = random_segment(rng, 3, k % 2 == 0);
    const auto end = paths::mean_at(seg, seg.t_next);
    const auto start = paths::mean_at(seg, seg.t_i);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(end[j] == doctest::Approx(seg.x_next[j]).epsilon(1e-14));
      CHECK(start[j] == seg.x_i[j]);
    }
    CHECK(paths::sigma_at(seg, seg.t_i) == 0.0);
    CHECK(paths::sigma_at(seg, seg.t_next) == 0.0);
  }
}

TEST_CASE("derivatives match central differences") {
  Rng rng = make_stream(7, 0);
  const double h = 1e-6;
  for (int k = 0; k < 200; ++k) {
    const auto seg = random_segment(rng, 2, k % 3 != 0);
    const double dt = seg.t_next - seg.t_i;
    const double t = seg.t_i + uniform(rng, 0.05, 0.95) * dt;
    const auto e = paths::evaluate(seg, t);
    const double ds = (paths::sigma_at(seg, t + h) - paths::sigma_at(seg, t - h)) / (2 * h);
    CHECK(std::abs(ds - e.sigma_prime) <= 1e-5 * std::max(1.0, std::abs(e.sigma_prime)));
    const auto a = paths::mean_at(seg, t + h), b = paths::mean_at(seg, t - h);
    for (std::size_t j = 0; j < 2; ++j) {
      const double dm = (a[j] - b[j]) / (2 * h);
      CHECK(std::abs(dm - e.mu_prime[j]) <= 1e-5 * std::max(1.0, std::abs(e.mu_prime[j])));
    }
  }
}

TEST_CASE("sigma peaks at the segment midpoint") {
  const auto seg = example_segment();
  double best_t = 0.0, best = -1.0;
  for (int i = 1; i < 10000; ++i) {
    const double t = i / 10000.0;
    const double s = paths::sigma_at(seg, t);
    if (s > best) {
      best = s;
      best_t = t;
    }
  }
  CHECK(std::abs(best_t - 0.5) <= 1e-4);
}

TEST_CASE("integrating the target field reaches the next observation") {
  Rng rng = make_stream(8, 0);
  for (int k = 0; k < 20; ++k) {
    const auto seg = random_segment(rng, 2, true);
    const double eps = seg.time_margin();
    const double t0 = seg.t_i + eps, t1 = seg.t_next - eps;
    Vec x = paths::evaluate(seg, t0).mu;
    const int steps = 1000;
    const double h = (t1 - t0) / steps;
    for (int i = 0; i < steps; ++i) {
      const auto v = paths::target_velocity(seg, t0 + i * h, x);
      for (std::size_t j = 0; j < 2; ++j) x[j] += h * v[j];
    }
    const auto v_scale = std::abs(seg.velocity()[0]) + std::abs(seg.next_velocity()[0]) + 1.0;
    CHECK(std::abs(x[0] - seg.x_next[0]) < 10.0 * v_scale * (h + eps));
  }
}

TEST_CASE("clamp keeps times inside the training window") {
  const auto seg = example_segment();
  CHECK(paths::clamp_to_window(seg, 0.0) == doctest::Approx(seg.time_margin()));
  CHECK(paths::clamp_to_window(seg, 1.0) == doctest::Approx(1.0 - seg.time_margin()));
  CHECK(paths::clamp_to_window(seg, 0.5) == 0.5);
}

TEST_CASE("invalid segments are rejected") {
  PathSegment s = example_segment();
  s.t_next = 0.0;
  CHECK_THROWS_AS(s.validate(), DomainError);
  PathSegment d = example_segment();
  d.x_next = {1.0, 2.0};
  CHECK_THROWS(d.validate());
}
