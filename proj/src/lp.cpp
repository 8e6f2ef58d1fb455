// SPDX-License-Identifier: Apache-2.0
#include "immfm/lp.hpp"

#include <cmath>
#include <limits>

#include "immfm/error.hpp"

namespace immfm::lp {
namespace {

constexpr double kEps = 1e-12;

// Tableau with rows [constraints..., objective]; last column is the rhs.
class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), t_(rows * cols, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return t_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return t_[r * cols_ + c]; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double p = at(pr, pc);
    for (std::size_t c = 0; c < cols_; ++c) at(pr, c) /= p;
    for (std::size_t r = 0; r < rows_; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < cols_; ++c) at(r, c) -= f * at(pr, c);
      at(r, pc) = 0.0;
    }
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> t_;
};

// Runs the simplex on constraint rows [0, m) with objective row m, over
// columns allowed by `eligible`. Returns pivots taken.
std::size_t run_simplex(Tableau& tab, std::vector<std::size_t>& basis, std::size_t m,
                        const std::vector<bool>& eligible, std::size_t max_pivots) {
  const std::size_t rhs = tab.cols() - 1;
  std::size_t pivots = 0;
  while (true) {
    // Bland: lowest-index column with negative reduced cost.
    std::size_t enter = rhs;
    for (std::size_t c = 0; c < rhs; ++c) {
      if (eligible[c] && tab.at(m, c) < -kEps) {
        enter = c;
        break;
      }
    }
    if (enter == rhs) return pivots;
    std::size_t leave = m;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < m; ++r) {
      const double a = tab.at(r, enter);
      if (a > kEps) {
        const double ratio = tab.at(r, rhs) / a;
        if (ratio < best - kEps || (ratio <= best + kEps && leave < m && basis[r] < basis[leave])) {
          best = ratio;
          leave = r;
        }
      }
    }
    if (leave == m) throw ConvergenceError("linear program is unbounded", 0.0);
    tab.pivot(leave, enter);
    basis[leave] = enter;
    if (++pivots > max_pivots) throw ConvergenceError("simplex pivot limit reached", 0.0);
  }
}

}  // namespace

LpSolution solve_standard_form(const Tensor& a, const std::vector<double>& b,
                               const std::vector<double>& c) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (b.size() != m || c.size() != n) {
    throw DimensionError("solve_standard_form: A is " + a.shape_string() + ", b has " +
                         std::to_string(b.size()) + ", c has " + std::to_string(c.size()));
  }
  // Columns: n structural, m artificial, rhs.
  Tableau tab(m + 1, n + m + 1);
  const std::size_t rhs = n + m;
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double sign = b[r] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) tab.at(r, j) = sign * a(r, j);
    tab.at(r, n + r) = 1.0;
    tab.at(r, rhs) = sign * b[r];
    basis[r] = n + r;
  }
  // Phase 1 objective: sum of artificials, expressed in nonbasic terms.
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j <= rhs; ++j)
      if (j < n || j == rhs) tab.at(m, j) -= tab.at(r, j);

  const std::size_t max_pivots = 50 * (n + m) + 1000;
  std::vector<bool> all(rhs, true);
  std::size_t pivots = run_simplex(tab, basis, m, all, max_pivots);
  const double scale = 1.0 + [&] {
    double s = 0.0;
    for (double v : b) s += std::abs(v);
    return s;
  }();
  if (-tab.at(m, rhs) > 1e-9 * scale) {
    throw DomainError("linear program is infeasible (phase-1 residual " +
                      std::to_string(-tab.at(m, rhs)) + ")");
  }

  // Drive zero-level artificials out of the basis; rows that cannot pivot are redundant.
  std::vector<bool> row_active(m, true);
  for (std::size_t r = 0; r < m; ++r) {
    if (basis[r] < n) continue;
    std::size_t col = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(tab.at(r, j)) > 1e-9) {
        col = j;
        break;
      }
    }
    if (col == n) {
      row_active[r] = false;
      continue;
    }
    tab.pivot(r, col);
    basis[r] = col;
    ++pivots;
  }

  // Phase 2 on the structural columns, dropping redundant rows.
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < m; ++r)
    if (row_active[r]) keep.push_back(r);
  const std::size_t m2 = keep.size();
  Tableau tab2(m2 + 1, n + 1);
  std::vector<std::size_t> basis2(m2);
  for (std::size_t k = 0; k < m2; ++k) {
    for (std::size_t j = 0; j < n; ++j) tab2.at(k, j) = tab.at(keep[k], j);
    tab2.at(k, n) = tab.at(keep[k], rhs);
    basis2[k] = basis[keep[k]];
  }
  for (std::size_t j = 0; j < n; ++j) tab2.at(m2, j) = c[j];
  for (std::size_t k = 0; k < m2; ++k) {
    const double cb = c[basis2[k]];
    if (cb == 0.0) continue;
    for (std::size_t j = 0; j <= n; ++j) tab2.at(m2, j) -= cb * tab2.at(k, j);
  }
  std::vector<bool> structural(n, true);
  pivots += run_simplex(tab2, basis2, m2, structural, max_pivots);

  LpSolution sol;
  sol.x.assign(n, 0.0);
  for (std::size_t k = 0; k < m2; ++k) sol.x[basis2[k]] = std::max(tab2.at(k, n), 0.0);
  sol.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) sol.objective += c[j] * sol.x[j];
  sol.pivots = pivots;
  return sol;
}

}  // namespace immfm::lp
