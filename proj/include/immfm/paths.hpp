// SPDX-License-Identifier: Apache-2.0
#pragma once

// Piecewise-quadratic Gaussian conditional paths and their flow-matching targets.
//
// On [t_i, t_next] with blending alpha = (t_next - t) / (t_next - t_i):
//   mu(t)    = x_i + v_i (t - t_i) + 1/2 alpha (v_i - v_next) (t - t_i)
//   sigma(t) = sigma0 (t - t_i) alpha
// where v_i is the segment's own velocity and v_next the following segment's.

#include <optional>

#include "immfm/rng.hpp"
#include "immfm/trajectory.hpp"

namespace immfm::paths {

/// Quadratic is the blended path; linear drops the look-ahead (v_next := v_i).
enum class PathKind { quadratic, linear };

struct PathSegment {
  double t_i = 0.0;
  double t_next = 1.0;
  std::optional<double> t_after;
  Vec x_i;
  Vec x_next;
  std::optional<Vec> x_after;
  double sigma0 = 0.1;
  PathKind kind = PathKind::quadratic;

  std::size_t dim() const noexcept { return x_i.size(); }
  void validate() const;

  Vec velocity() const;
  /// Following segment's velocity; falls back to velocity() on the last segment.
  Vec next_velocity() const;
  /// Lower bound applied to sigma wherever it is divided by.
  double sigma_min() const noexcept { return 1e-4 * sigma0; }
  /// Training-time margin: times are drawn from [t_i + eps, t_next - eps].
  double time_margin() const noexcept { return 1e-3 * (t_next - t_i); }
};

struct PathEvaluation {
  Vec mu;
  Vec mu_prime;
  double sigma = 0.0;
  double sigma_prime = 0.0;
  double alpha = 0.0;
};

/// Throws DomainError unless t_i < t < t_next.
PathEvaluation evaluate(const PathSegment& seg, double t);

/// Mean on the closed segment [t_i, t_next]; used for interpolation checks.
Vec mean_at(const PathSegment& seg, double t);
double sigma_at(const PathSegment& seg, double t);

/// mu' + (sigma'/sigma)(x - mu), sigma clamped below by sigma_min().
Vec target_velocity(const PathSegment& seg, double t, const Vec& x);
/// (mu - x) / sigma^2, same clamp.
Vec target_score(const PathSegment& seg, double t, const Vec& x);

/// Draw x ~ N(mu(t), sigma(t)^2 I).
Vec sample_path_point(const PathSegment& seg, double t, Rng& rng);

/// Clamp t into the open training window of the segment.
double clamp_to_window(const PathSegment& seg, double t);

}  // namespace immfm::paths
