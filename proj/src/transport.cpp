// SPDX-License-Identifier: Apache-2.0
#include "immfm/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "immfm/error.hpp"
#include "immfm/kernels.hpp"

namespace immfm::ot {

WeightedPoints WeightedPoints::uniform(std::vector<Vec> points) {
  WeightedPoints wp;
  const std::size_t n = points.size();
  wp.points = std::move(points);
  wp.weights.assign(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
  return wp;
}

void WeightedPoints::validate() const {
  if (points.empty()) throw DomainError("point set is empty");
  if (weights.size() != points.size()) {
    throw DimensionError("point set has " + std::to_string(points.size()) + " points but " +
                         std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("weights sum to " + std::to_string(total) + ", expected 1");
  }
  for (const auto& p : points) {
    if (p.size() != points.front().size()) throw DimensionError("ragged point set");
  }
}

double median_cost(const Tensor& cost) {
  std::vector<double> values(cost.data().begin(), cost.data().end());
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  double med = values[mid];
  if (values.size() % 2 == 0) {
    const double lower = *std::max_element(values.begin(),
                                           values.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med;
}

double marginal_residual(const Tensor& plan, const std::vector<double>& a,
                         const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double s = 0.0;
    for (double v : plan.row(i)) s += v;
    worst = std::max(worst, std::abs(s - a[i]));
  }
  for (std::size_t j = 0; j < plan.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < plan.rows(); ++i) s += plan(i, j);
    worst = std::max(worst, std::abs(s - b[j]));
  }
  return worst;
}

namespace {

void check_problem(const Tensor& cost, const std::vector<double>& a,
                   const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw DomainError("transport between empty measures");
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw DimensionError("cost " + cost.shape_string() + " does not match weights " +
                         std::to_string(a.size()) + "x" + std::to_string(b.size()));
  }
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (std::abs(sa - sb) > 1e-9 * std::max(1.0, sa)) {
    throw DomainError("unbalanced transport: masses " + std::to_string(sa) + " vs " +
                      std::to_string(sb));
  }
}

double plan_cost(const Tensor& plan, const Tensor& cost) {
  double total = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) total += plan[i] * cost[i];
  return total;
}

}  // namespace

OtResult solve_exact(const Tensor& cost, const std::vector<double>& a,
                     const std::vector<double>& b) {
  check_problem(cost, a, b);
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  Tensor flow(n, m, 0.0);
  std::vector<char> basic(n * m, 0);
  std::vector<std::size_t> basis;
  basis.reserve(n + m - 1);

  // Northwest corner: exactly n + m - 1 cells forming a spanning tree.
  {
    std::vector<double> ra = a;
    std::vector<double> rb = b;
    std::size_t i = 0, j = 0;
    while (true) {
      const double q = std::min(ra[i], rb[j]);
      flow(i, j) = q;
      basic[i * m + j] = 1;
      basis.push_back(i * m + j);
      ra[i] -= q;
      rb[j] -= q;
      if (i == n - 1 && j == m - 1) break;
      if (i == n - 1) {
        ++j;
      } else if (j == m - 1) {
        ++i;
      } else if (ra[i] < rb[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  double cmax = 0.0;
  for (double c : cost.data()) cmax = std::max(cmax, std::abs(c));
  const double tol = 1e-12 * (1.0 + cmax);
  const std::size_t max_iter = 100 * (n + m) * std::max<std::size_t>(1, std::min(n, m)) + 1000;

  std::vector<double> u(n), v(m);
  std::vector<std::vector<std::size_t>> row_cells(n), col_cells(m);
  std::vector<std::size_t> parent_node(n + m), parent_cell(n + m);
  std::vector<char> seen(n + m);
  std::size_t iter = 0;

  for (;; ++iter) {
    if (iter > max_iter) {
      throw ConvergenceError("transportation simplex exceeded iteration limit",
                             marginal_residual(flow, a, b));
    }
    for (auto& rc : row_cells) rc.clear();
    for (auto& cc : col_cells) cc.clear();
    for (std::size_t cell : basis) {
      row_cells[cell / m].push_back(cell);
      col_cells[cell % m].push_back(cell);
    }
    // Potentials u_i + v_j = c_ij on the tree, rooted at row 0.
    std::fill(seen.begin(), seen.end(), 0);
    std::queue<std::size_t> frontier;
    u[0] = 0.0;
    seen[0] = 1;
    frontier.push(0);
    while (!frontier.empty()) {
      const std::size_t node = frontier.front();
      frontier.pop();
      if (node < n) {
        for (std::size_t cell : row_cells[node]) {
          const std::size_t col = cell % m;
          if (seen[n + col]) continue;
          v[col] = cost[cell] - u[node];
          seen[n + col] = 1;
          frontier.push(n + col);
        }
      } else {
        const std::size_t col = node - n;
        for (std::size_t cell : col_cells[col]) {
          const std::size_t row = cell / m;
          if (seen[row]) continue;
          u[row] = cost[cell] - v[col];
          seen[row] = 1;
          frontier.push(row);
        }
      }
    }

    std::size_t enter = n * m;
    double best = -tol;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t cell = i * m + j;
        if (basic[cell]) continue;
        const double reduced = cost[cell] - u[i] - v[j];
        if (reduced < best) {
          best = reduced;
          enter = cell;
        }
      }
    }
    if (enter == n * m) break;

    // Tree path from row p to column q.
    const std::size_t p = enter / m;
    const std::size_t q = enter % m;
    std::fill(seen.begin(), seen.end(), 0);
    seen[p] = 1;
    frontier.push(p);
    while (!frontier.empty()) {
      const std::size_t node = frontier.front();
      frontier.pop();
      if (node == n + q) break;
      const auto& cells = node < n ? row_cells[node] : col_cells[node - n];
      for (std::size_t cell : cells) {
        const std::size_t next = node < n ? n + cell % m : cell / m;
        if (seen[next]) continue;
        seen[next] = 1;
        parent_node[next] = node;
        parent_cell[next] = cell;
        frontier.push(next);
      }
    }
    std::queue<std::size_t>().swap(frontier);

    std::vector<std::size_t> cycle;  // walked from column q back to row p
    for (std::size_t node = n + q; node != p; node = parent_node[node]) {
      cycle.push_back(parent_cell[node]);
    }
    // cycle[0] shares column q with the entering cell: signs -, +, -, ...
    std::size_t leave = n * m;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cycle.size(); k += 2) {
      const std::size_t cell = cycle[k];
      if (flow[cell] < theta || (flow[cell] == theta && cell < leave)) {
        theta = flow[cell];
        leave = cell;
      }
    }
    flow[enter] = theta;
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      double& f = flow[cycle[k]];
      f += (k % 2 == 0) ? -theta : theta;
      if (f < 0.0) f = 0.0;
    }
    flow[leave] = 0.0;
    basic[leave] = 0;
    basic[enter] = 1;
    *std::find(basis.begin(), basis.end(), leave) = enter;
  }

  OtResult out;
  out.plan = std::move(flow);
  out.cost = plan_cost(out.plan, cost);
  out.exact = true;
  out.residual = marginal_residual(out.plan, a, b);
  out.iterations = iter;
  return out;
}

OtResult solve_entropic(const Tensor& cost, const std::vector<double>& a,
                        const std::vector<double>& b, double epsilon,
                        std::size_t max_iterations, double tolerance) {
  check_problem(cost, a, b);
  if (!(epsilon > 0.0)) throw DomainError("entropic regularisation must be positive");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> f(n, 0.0), g(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] <= 0.0) f[i] = neg_inf;
  for (std::size_t j = 0; j < m; ++j)
    if (b[j] <= 0.0) g[j] = neg_inf;

  // log-sum-exp over the active entries of (pot_k - c_k) / eps.
  auto soft_min = [epsilon, neg_inf](auto&& term, std::size_t count) {
    double hi = neg_inf;
    for (std::size_t k = 0; k < count; ++k) hi = std::max(hi, term(k));
    if (hi == neg_inf) return neg_inf;
    double s = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double x = term(k);
      if (x != neg_inf) s += std::exp(x - hi);
    }
    return epsilon * (hi + std::log(s));
  };

  Tensor plan(n, m);
  double residual = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  while (iter < max_iterations) {
    ++iter;
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] <= 0.0) continue;
      f[i] = epsilon * std::log(a[i]) -
             soft_min([&](std::size_t j) { return (g[j] - cost(i, j)) / epsilon; }, m);
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (b[j] <= 0.0) continue;
      g[j] = epsilon * std::log(b[j]) -
             soft_min([&](std::size_t i) { return (f[i] - cost(i, j)) / epsilon; }, n);
    }
    // Columns are exact after the g update; rows carry the residual.
    residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double e = f[i] + g[j] - cost(i, j);
        const double p = (f[i] == neg_inf || g[j] == neg_inf) ? 0.0 : std::exp(e / epsilon);
        plan(i, j) = p;
        s += p;
      }
      residual += std::abs(s - a[i]);
    }
    if (residual < tolerance) break;
  }
  if (!(residual < tolerance)) {
    throw ConvergenceError("Sinkhorn did not converge in " + std::to_string(max_iterations) +
                               " iterations (residual " + std::to_string(residual) + ")",
                           residual);
  }
  OtResult out;
  out.plan = std::move(plan);
  out.cost = plan_cost(out.plan, cost);
  out.exact = false;
  out.residual = marginal_residual(out.plan, a, b);
  out.iterations = iter;
  out.epsilon = epsilon;
  return out;
}

OtResult pairwise_ot(const WeightedPoints& a, const WeightedPoints& b, const OtOptions& options) {
  a.validate();
  b.validate();
  if (a.points.front().size() != b.points.front().size()) {
    throw DimensionError("point sets differ in dimension");
  }
  const Tensor cost = a.size() * b.size() >= 4096
                          ? kernels::squared_distances_parallel(a.points, b.points)
                          : kernels::squared_distances_serial(a.points, b.points);
  bool exact = options.solver == Solver::exact;
  if (options.solver == Solver::automatic) {
    exact = a.size() <= options.exact_max_size && b.size() <= options.exact_max_size;
  }
  if (exact) return solve_exact(cost, a.weights, b.weights);

  double eps = options.epsilon;
  if (!(eps > 0.0)) {
    eps = 0.01 * median_cost(cost);
    if (!(eps > 0.0)) {
      double cmax = 0.0;
      for (double c : cost.data()) cmax = std::max(cmax, c);
      eps = 0.01 * cmax;
    }
  }
  if (!(eps > 0.0)) {
    // Every pair costs nothing: the independent coupling is optimal.
    OtResult out;
    out.plan = Tensor(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) out.plan(i, j) = a.weights[i] * b.weights[j];
    out.exact = false;
    out.residual = marginal_residual(out.plan, a.weights, b.weights);
    return out;
  }
  return solve_entropic(cost, a.weights, b.weights, eps, options.max_iterations,
                        options.tolerance);
}

}  // namespace immfm::ot
