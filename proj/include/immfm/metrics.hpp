// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "immfm/trajectory.hpp"
#include "immfm/transport.hpp"

namespace immfm::metrics {

/// Mean per-coordinate squared error over all aligned states.
/// Throws DomainError unless both trajectories share one time grid.
double trajectory_mse(const Trajectory& pred, const Trajectory& truth);
inline double mse_times_ten(double mse) { return 10.0 * mse; }

/// sqrt of the exact optimal squared-distance transport cost between the
/// uniform empirical measures on `a` and `b`.
double wasserstein2_empirical(const std::vector<Vec>& a, const std::vector<Vec>& b);

/// Standard normal CDF.
double normal_cdf(double z);

/// Overlap coefficient of N(mu1, sigma1^2) and N(mu2, sigma2^2) from the two
/// density intersection points. When |sigma1^2 - sigma2^2| < 1e-12 it uses
/// the equal-variance closed form 2 Phi(-|mu1 - mu2| / sqrt(2 sigma^2)).
double overlap_coefficient(double mu1, double sigma1, double mu2, double sigma2);

/// Intersection points (c1, c2) of two normal densities with unequal variances.
struct Intersections {
  double c1;
  double c2;
};
Intersections density_intersections(double mu1, double sigma1, double mu2, double sigma2);

}  // namespace immfm::metrics
