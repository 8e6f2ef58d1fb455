// SPDX-License-Identifier: Apache-2.0
#include "immfm/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "immfm/error.hpp"
#include "immfm/lp.hpp"

namespace immfm::coupling {

std::size_t MarginalSet::dim() const {
  for (const auto& s : samples)
    if (!s.empty()) return s.front().size();
  return 0;
}

void MarginalSet::set_uniform_weights() {
  weights.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (weights[i].size() != samples[i].size()) {
      weights[i].assign(samples[i].size(), 1.0 / static_cast<double>(samples[i].size()));
    }
  }
}

void MarginalSet::validate() const {
  if (times.size() < 2) throw DomainError("need at least two marginals");
  if (samples.size() != times.size() || weights.size() != times.size()) {
    throw DimensionError("marginal set: times, samples and weights differ in length");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw DomainError("marginal times must strictly increase");
  }
  const std::size_t d = dim();
  for (std::size_t i = 0; i < times.size(); ++i) {
    ot::WeightedPoints wp{samples[i], weights[i]};
    wp.validate();
    if (wp.points.front().size() != d) throw DimensionError("marginals differ in dimension");
  }
}

ot::WeightedPoints MarginalSet::marginal(std::size_t i) const {
  return ot::WeightedPoints{samples.at(i), weights.at(i)};
}

std::vector<std::size_t> CouplingPlan::sizes() const {
  std::vector<std::size_t> out;
  if (plans.empty()) return out;
  out.push_back(plans.front().rows());
  for (const auto& p : plans) out.push_back(p.cols());
  return out;
}

std::vector<std::vector<double>> CouplingPlan::marginals() const {
  std::vector<std::vector<double>> out;
  if (plans.empty()) return out;
  const Tensor& first = plans.front();
  std::vector<double> rows(first.rows(), 0.0);
  for (std::size_t i = 0; i < first.rows(); ++i)
    for (double v : first.row(i)) rows[i] += v;
  out.push_back(std::move(rows));
  for (const auto& p : plans) {
    std::vector<double> cols(p.cols(), 0.0);
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) cols[j] += p(i, j);
    out.push_back(std::move(cols));
  }
  return out;
}

CouplingPlan couple_marginals(const MarginalSet& data, const ot::OtOptions& options) {
  data.validate();
  const std::size_t pairs = data.num_times() - 1;
  CouplingPlan out;
  out.times = data.times;
  out.plans.resize(pairs);
  std::vector<std::exception_ptr> errors(pairs);
  const auto count = static_cast<std::ptrdiff_t>(pairs);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      out.plans[i] = ot::pairwise_ot(data.marginal(i), data.marginal(i + 1), options).plan;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace {

std::vector<double> cumulative(std::span<const double> w) {
  std::vector<double> cdf(w.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    acc += w[k];
    cdf[k] = acc;
  }
  return cdf;
}

std::size_t draw(const std::vector<double>& cdf, Rng& rng) {
  // upper_bound never lands on a zero-mass entry for u in [0, total).
  const double u = uniform01(rng) * cdf.back();
  std::size_t k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) -
                                           cdf.begin());
  if (k >= cdf.size()) {
    k = cdf.size() - 1;
    while (k > 0 && cdf[k] == cdf[k - 1]) --k;
  }
  return k;
}

}  // namespace

TrajectorySampler::TrajectorySampler(CouplingPlan plan) : plan_(std::move(plan)) {
  if (plan_.plans.empty()) throw DomainError("coupling has no plans");
  if (plan_.times.size() != plan_.plans.size() + 1) {
    throw DimensionError("coupling has " + std::to_string(plan_.times.size()) + " times but " +
                         std::to_string(plan_.plans.size()) + " plans");
  }
  for (std::size_t i = 0; i < plan_.plans.size(); ++i) {
    for (double v : plan_.plans[i].data()) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("transport plan has negative mass");
    }
    if (i > 0 && plan_.plans[i].rows() != plan_.plans[i - 1].cols()) {
      throw DimensionError("consecutive plans disagree on the intermediate support size");
    }
  }
  marginals_ = plan_.marginals();
  for (std::size_t i = 1; i < plan_.plans.size(); ++i) {
    const Tensor& p = plan_.plans[i];
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double row = 0.0;
      for (double v : p.row(r)) row += v;
      if (std::abs(row - marginals_[i][r]) > 1e-6) {
        throw DomainError("plans " + std::to_string(i - 1) + " and " + std::to_string(i) +
                          " disagree on marginal " + std::to_string(i) + " (entry " +
                          std::to_string(r) + ": " + std::to_string(marginals_[i][r]) + " vs " +
                          std::to_string(row) + ")");
      }
    }
  }
  initial_cdf_ = cumulative(marginals_[0]);
  conditional_.resize(plan_.plans.size());
  for (std::size_t i = 0; i < plan_.plans.size(); ++i) {
    const Tensor& p = plan_.plans[i];
    conditional_[i].resize(p.rows());
    for (std::size_t r = 0; r < p.rows(); ++r) conditional_[i][r] = cumulative(p.row(r));
  }
}

std::vector<std::size_t> TrajectorySampler::sample(Rng& rng) const {
  std::vector<std::size_t> path(plan_.plans.size() + 1);
  path[0] = draw(initial_cdf_, rng);
  for (std::size_t i = 0; i < plan_.plans.size(); ++i) {
    const auto& cdf = conditional_[i][path[i]];
    if (!(cdf.back() > 0.0)) throw DomainError("sampled a zero-mass state");
    path[i + 1] = draw(cdf, rng);
  }
  return path;
}

double TrajectorySampler::probability(const std::vector<std::size_t>& path) const {
  if (path.size() != plan_.plans.size() + 1) throw DimensionError("path length mismatch");
  double p = 1.0;
  for (std::size_t i = 0; i < plan_.plans.size(); ++i) p *= plan_.plans[i](path[i], path[i + 1]);
  for (std::size_t i = 1; i < plan_.plans.size(); ++i) {
    const double rho = marginals_[i][path[i]];
    if (rho <= 0.0) return 0.0;
    p /= rho;
  }
  return p;
}

TrajectorySampler compose_coupling(const CouplingPlan& plan) { return TrajectorySampler(plan); }

namespace {

std::size_t total_size(const std::vector<std::size_t>& sizes) {
  return std::accumulate(sizes.begin(), sizes.end(), std::size_t{1}, std::multiplies<>());
}

// Decodes a flat joint index into per-time indices (last time fastest).
void decode(std::size_t flat, const std::vector<std::size_t>& sizes,
            std::vector<std::size_t>& path) {
  path.resize(sizes.size());
  for (std::size_t i = sizes.size(); i-- > 0;) {
    path[i] = flat % sizes[i];
    flat /= sizes[i];
  }
}

}  // namespace

std::vector<double> composed_joint(const CouplingPlan& plan) {
  const TrajectorySampler sampler(plan);
  const auto sizes = plan.sizes();
  std::vector<double> joint(total_size(sizes));
  std::vector<std::size_t> path;
  for (std::size_t f = 0; f < joint.size(); ++f) {
    decode(f, sizes, path);
    joint[f] = sampler.probability(path);
  }
  return joint;
}

std::vector<double> joint_marginal(const std::vector<double>& joint,
                                   const std::vector<std::size_t>& sizes, std::size_t time) {
  std::vector<double> out(sizes.at(time), 0.0);
  std::vector<std::size_t> path;
  for (std::size_t f = 0; f < joint.size(); ++f) {
    decode(f, sizes, path);
    out[path[time]] += joint[f];
  }
  return out;
}

Tensor joint_pair_marginal(const std::vector<double>& joint,
                           const std::vector<std::size_t>& sizes, std::size_t time) {
  Tensor out(sizes.at(time), sizes.at(time + 1), 0.0);
  std::vector<std::size_t> path;
  for (std::size_t f = 0; f < joint.size(); ++f) {
    decode(f, sizes, path);
    out(path[time], path[time + 1]) += joint[f];
  }
  return out;
}

std::vector<double> path_costs(const MarginalSet& data) {
  std::vector<std::size_t> sizes;
  for (const auto& s : data.samples) sizes.push_back(s.size());
  std::vector<double> costs(total_size(sizes));
  std::vector<std::size_t> path;
  for (std::size_t f = 0; f < costs.size(); ++f) {
    decode(f, sizes, path);
    double c = 0.0;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const Vec& x = data.samples[i][path[i]];
      const Vec& y = data.samples[i + 1][path[i + 1]];
      for (std::size_t k = 0; k < x.size(); ++k) c += (x[k] - y[k]) * (x[k] - y[k]);
    }
    costs[f] = c;
  }
  return costs;
}

MmotSolution brute_force_mmot(const MarginalSet& data) {
  data.validate();
  if (data.num_times() > kBruteForceMaxTimes) {
    throw DomainError("brute-force MMOT supports at most " + std::to_string(kBruteForceMaxTimes) +
                      " times, got " + std::to_string(data.num_times()));
  }
  std::vector<std::size_t> sizes;
  for (const auto& s : data.samples) {
    if (s.size() > kBruteForceMaxPoints) {
      throw DomainError("brute-force MMOT supports at most " +
                        std::to_string(kBruteForceMaxPoints) + " points per time");
    }
    sizes.push_back(s.size());
  }
  const std::size_t vars = total_size(sizes);
  const std::size_t constraints = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  Tensor a(constraints, vars, 0.0);
  std::vector<double> b;
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0, off = 0; i < sizes.size(); off += sizes[i], ++i) {
    offsets.push_back(off);
    b.insert(b.end(), data.weights[i].begin(), data.weights[i].end());
  }
  std::vector<std::size_t> path;
  for (std::size_t f = 0; f < vars; ++f) {
    decode(f, sizes, path);
    for (std::size_t i = 0; i < sizes.size(); ++i) a(offsets[i] + path[i], f) = 1.0;
  }
  const auto solution = lp::solve_standard_form(a, b, path_costs(data));
  return MmotSolution{sizes, solution.x, solution.objective};
}

double chained_pairwise_cost(const MarginalSet& data) {
  data.validate();
  double total = 0.0;
  ot::OtOptions exact;
  exact.solver = ot::Solver::exact;
  for (std::size_t i = 0; i + 1 < data.num_times(); ++i) {
    total += ot::pairwise_ot(data.marginal(i), data.marginal(i + 1), exact).cost;
  }
  return total;
}

CouplingPlan align_pre_paired(const std::vector<Trajectory>& data) {
  if (data.empty()) throw DomainError("no trajectories to align");
  const auto& grid = data.front().times;
  if (grid.size() < 2) throw DomainError("aligned trajectories need at least two times");
  for (const auto& tr : data) {
    tr.validate();
    if (tr.times.size() != grid.size()) {
      throw DomainError("trajectory '" + tr.subject_id + "' is not on the shared time grid");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (std::abs(tr.times[i] - grid[i]) > 1e-12) {
        throw DomainError("trajectory '" + tr.subject_id + "' is not on the shared time grid");
      }
    }
  }
  const std::size_t n = data.size();
  CouplingPlan out;
  out.times = grid;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    Tensor p(n, n, 0.0);
    for (std::size_t k = 0; k < n; ++k) p(k, k) = 1.0 / static_cast<double>(n);
    out.plans.push_back(std::move(p));
  }
  return out;
}

MarginalSet marginals_from_trajectories(const std::vector<Trajectory>& data) {
  align_pre_paired(data);
  MarginalSet out;
  out.times = data.front().times;
  out.samples.resize(out.times.size());
  for (std::size_t i = 0; i < out.times.size(); ++i)
    for (const auto& tr : data) out.samples[i].push_back(tr.states[i]);
  out.set_uniform_weights();
  return out;
}

}  // namespace immfm::coupling
