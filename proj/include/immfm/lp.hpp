// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "immfm/tensor.hpp"

namespace immfm::lp {

struct LpSolution {
  std::vector<double> x;
  double objective = 0.0;
  std::size_t pivots = 0;
};

/// Minimise c.x subject to A x = b, x >= 0 with a dense two-phase tableau
/// simplex under Bland's rule. Small instances only; throws DomainError when
/// infeasible and ConvergenceError when unbounded or out of pivots.
LpSolution solve_standard_form(const Tensor& a, const std::vector<double>& b,
                               const std::vector<double>& c);

}  // namespace immfm::lp
