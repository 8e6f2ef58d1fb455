// SPDX-License-Identifier: Apache-2.0
#pragma once

// Discrete two-marginal optimal transport.

#include <cstddef>
#include <vector>

#include "immfm/tensor.hpp"
#include "immfm/trajectory.hpp"

namespace immfm::ot {

struct WeightedPoints {
  std::vector<Vec> points;
  std::vector<double> weights;

  static WeightedPoints uniform(std::vector<Vec> points);
  std::size_t size() const noexcept { return points.size(); }
  /// Nonempty, equal dimensions, nonnegative weights summing to 1 within 1e-9.
  void validate() const;
};

enum class Solver { automatic, exact, entropic };

struct OtOptions {
  Solver solver = Solver::automatic;
  /// Automatic mode solves exactly while both sides have at most this many points.
  std::size_t exact_max_size = 64;
  /// Entropic regularisation; <= 0 selects 0.01 * median cost.
  double epsilon = 0.0;
  std::size_t max_iterations = 5000;
  double tolerance = 1e-7;
};

struct OtResult {
  Tensor plan;
  double cost = 0.0;
  bool exact = true;
  /// marginal_residual() of the returned plan.
  double residual = 0.0;
  std::size_t iterations = 0;
  double epsilon = 0.0;
};

/// Transportation simplex (northwest-corner start, potentials, Dantzig
/// pricing with lowest-index tie breaking). Returns a vertex of the
/// transport polytope.
OtResult solve_exact(const Tensor& cost, const std::vector<double>& a,
                     const std::vector<double>& b);

/// Log-domain Sinkhorn. Throws ConvergenceError with the final residual when
/// max_iterations is exhausted.
OtResult solve_entropic(const Tensor& cost, const std::vector<double>& a,
                        const std::vector<double>& b, double epsilon,
                        std::size_t max_iterations, double tolerance);

/// Squared-Euclidean OT between two weighted point sets.
OtResult pairwise_ot(const WeightedPoints& a, const WeightedPoints& b,
                     const OtOptions& options = {});

/// Median entry of a cost matrix.
double median_cost(const Tensor& cost);

/// Largest absolute deviation of any row sum from `a` or column sum from `b`.
double marginal_residual(const Tensor& plan, const std::vector<double>& a,
                         const std::vector<double>& b);

}  // namespace immfm::ot
