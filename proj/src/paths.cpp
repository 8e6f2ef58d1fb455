// SPDX-License-Identifier: Apache-2.0
#include "immfm/paths.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "immfm/error.hpp"

namespace immfm {

void Trajectory::validate() const {
  if (times.size() != states.size()) {
    throw DomainError("trajectory '" + subject_id + "': " + std::to_string(times.size()) +
                      " times but " + std::to_string(states.size()) + " states");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw DomainError("trajectory '" + subject_id + "': times not strictly increasing at " +
                        std::to_string(i));
    }
  }
  for (const auto& s : states) {
    if (s.size() != dim()) throw DimensionError("trajectory '" + subject_id + "': ragged states");
  }
}

namespace paths {
namespace {

Vec difference_quotient(const Vec& a, const Vec& b, double dt) {
  Vec v(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) v[k] = (b[k] - a[k]) / dt;
  return v;
}

void require_inside(const PathSegment& seg, double t) {
  if (!(t > seg.t_i && t < seg.t_next)) {
    throw DomainError("time " + std::to_string(t) + " outside open segment (" +
                      std::to_string(seg.t_i) + ", " + std::to_string(seg.t_next) + ")");
  }
}

}  // namespace

void PathSegment::validate() const {
  if (!(t_i < t_next)) throw DomainError("segment requires t_i < t_next");
  if (t_after.has_value() != x_after.has_value()) {
    throw DomainError("segment look-ahead needs both t_after and x_after");
  }
  if (t_after && !(t_next < *t_after)) throw DomainError("segment requires t_next < t_after");
  if (x_i.empty() || x_next.size() != x_i.size() || (x_after && x_after->size() != x_i.size())) {
    throw DimensionError("segment states must share a positive dimension");
  }
  if (!(sigma0 >= 0.0) || !std::isfinite(sigma0)) throw DomainError("sigma0 must be >= 0");
}

Vec PathSegment::velocity() const { return difference_quotient(x_i, x_next, t_next - t_i); }

Vec PathSegment::next_velocity() const {
  if (kind == PathKind::linear || !t_after) return velocity();
  return difference_quotient(x_next, *x_after, *t_after - t_next);
}

Vec mean_at(const PathSegment& seg, double t) {
  const Vec v = seg.velocity();
  const Vec vn = seg.next_velocity();
  const double alpha = (seg.t_next - t) / (seg.t_next - seg.t_i);
  const double s = t - seg.t_i;
  Vec mu(seg.dim());
  for (std::size_t k = 0; k < mu.size(); ++k) {
    mu[k] = seg.x_i[k] + v[k] * s + 0.5 * alpha * (v[k] - vn[k]) * s;
  }
  return mu;
}

double sigma_at(const PathSegment& seg, double t) {
  const double alpha = (seg.t_next - t) / (seg.t_next - seg.t_i);
  return seg.sigma0 * (t - seg.t_i) * alpha;
}

PathEvaluation evaluate(const PathSegment& seg, double t) {
  seg.validate();
  require_inside(seg, t);
  const Vec v = seg.velocity();
  const Vec vn = seg.next_velocity();
  PathEvaluation out;
  out.alpha = (seg.t_next - t) / (seg.t_next - seg.t_i);
  const double s = t - seg.t_i;
  out.mu.resize(seg.dim());
  out.mu_prime.resize(seg.dim());
  for (std::size_t k = 0; k < seg.dim(); ++k) {
    const double blend = v[k] - vn[k];
    out.mu[k] = seg.x_i[k] + v[k] * s + 0.5 * out.alpha * blend * s;
    out.mu_prime[k] = v[k] + 0.5 * blend * (2.0 * out.alpha - 1.0);
  }
  out.sigma = seg.sigma0 * s * out.alpha;
  out.sigma_prime = seg.sigma0 * (2.0 * out.alpha - 1.0);
  return out;
}

namespace {

double clamped_sigma(const PathSegment& seg, double sigma) {
  if (!(seg.sigma0 > 0.0)) throw DomainError("flow-matching targets need sigma0 > 0");
  return std::max(sigma, seg.sigma_min());
}

void require_dim(const PathSegment& seg, const Vec& x) {
  if (x.size() != seg.dim()) {
    throw DimensionError("state has dimension " + std::to_string(x.size()) +
                         ", segment has " + std::to_string(seg.dim()));
  }
}

}  // namespace

Vec target_velocity(const PathSegment& seg, double t, const Vec& x) {
  require_dim(seg, x);
  const PathEvaluation e = evaluate(seg, t);
  const double ratio = e.sigma_prime / clamped_sigma(seg, e.sigma);
  Vec u(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) u[k] = e.mu_prime[k] + ratio * (x[k] - e.mu[k]);
  return u;
}

Vec target_score(const PathSegment& seg, double t, const Vec& x) {
  require_dim(seg, x);
  const PathEvaluation e = evaluate(seg, t);
  const double sigma = clamped_sigma(seg, e.sigma);
  const double inv_var = 1.0 / (sigma * sigma);
  Vec s(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) s[k] = (e.mu[k] - x[k]) * inv_var;
  return s;
}

Vec sample_path_point(const PathSegment& seg, double t, Rng& rng) {
  const PathEvaluation e = evaluate(seg, t);
  Vec x = e.mu;
  for (double& xk : x) xk += e.sigma * standard_normal(rng);
  return x;
}

double clamp_to_window(const PathSegment& seg, double t) {
  const double eps = seg.time_margin();
  return std::clamp(t, seg.t_i + eps, seg.t_next - eps);
}

}  // namespace paths
}  // namespace immfm
