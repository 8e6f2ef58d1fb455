// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-marginal couplings built from chained pairwise transport plans.
//
// With pairwise plans pi_{i,i+1} whose shared marginals agree, the joint
//   q(z) = prod_i pi_{i,i+1}(z_i, z_{i+1}) / prod_{0<i<M} rho_i(z_i)
// is the law of the Markov chain z_0 ~ rho_0, z_{i+1} ~ pi_{i,i+1}(z_i, .) / rho_i(z_i).
// It preserves every marginal and its cost is the sum of the pairwise costs.

#include <cstddef>
#include <vector>

#include "immfm/rng.hpp"
#include "immfm/tensor.hpp"
#include "immfm/trajectory.hpp"
#include "immfm/transport.hpp"

namespace immfm::coupling {

/// Unpaired empirical samples per observation time.
struct MarginalSet {
  std::vector<double> times;
  std::vector<std::vector<Vec>> samples;
  std::vector<std::vector<double>> weights;

  std::size_t num_times() const noexcept { return times.size(); }
  std::size_t dim() const;
  /// Fills uniform weights where a weight vector is missing.
  void set_uniform_weights();
  void validate() const;
  ot::WeightedPoints marginal(std::size_t i) const;
};

struct CouplingPlan {
  std::vector<double> times;
  /// plans[i] has shape n_i x n_{i+1}.
  std::vector<Tensor> plans;

  std::size_t num_times() const noexcept { return times.size(); }
  std::vector<std::size_t> sizes() const;
  /// Row sums of plans[0] and column sums of every plan.
  std::vector<std::vector<double>> marginals() const;
};

/// One pairwise problem per consecutive pair; the pairs are solved in parallel.
CouplingPlan couple_marginals(const MarginalSet& data, const ot::OtOptions& options = {});

/// Markov-chain sampler over sample indices, one per time.
class TrajectorySampler {
 public:
  /// Throws DomainError when consecutive plans disagree on a shared marginal by more than 1e-6.
  explicit TrajectorySampler(CouplingPlan plan);

  std::vector<std::size_t> sample(Rng& rng) const;
  /// Product/quotient probability of an index path.
  double probability(const std::vector<std::size_t>& path) const;
  const CouplingPlan& plan() const noexcept { return plan_; }

 private:
  CouplingPlan plan_;
  std::vector<std::vector<double>> marginals_;
  // conditional_[i][r] is the cumulative distribution of z_{i+1} given z_i = r.
  std::vector<std::vector<std::vector<double>>> conditional_;
  std::vector<double> initial_cdf_;
};

TrajectorySampler compose_coupling(const CouplingPlan& plan);

/// Dense joint q over all index paths, row-major with the last time fastest.
std::vector<double> composed_joint(const CouplingPlan& plan);

/// Marginal of a dense joint onto one time index.
std::vector<double> joint_marginal(const std::vector<double>& joint,
                                   const std::vector<std::size_t>& sizes, std::size_t time);
/// Marginal of a dense joint onto the consecutive pair (time, time + 1).
Tensor joint_pair_marginal(const std::vector<double>& joint,
                           const std::vector<std::size_t>& sizes, std::size_t time);

/// Additive pairwise squared-distance cost of every index path, same layout as composed_joint.
std::vector<double> path_costs(const MarginalSet& data);

struct MmotSolution {
  std::vector<std::size_t> sizes;
  std::vector<double> joint;
  double cost = 0.0;
};

inline constexpr std::size_t kBruteForceMaxTimes = 4;
inline constexpr std::size_t kBruteForceMaxPoints = 4;

/// Exact multi-marginal OT by one linear program over the full joint tensor.
/// Throws DomainError beyond 4 times or 4 points per time.
MmotSolution brute_force_mmot(const MarginalSet& data);

/// Sum over consecutive pairs of the exact pairwise optimum.
double chained_pairwise_cost(const MarginalSet& data);

/// Diagonal coupling for trajectories already observed on one shared grid.
CouplingPlan align_pre_paired(const std::vector<Trajectory>& data);

/// Marginals whose sample k at every time is the state of trajectory k.
MarginalSet marginals_from_trajectories(const std::vector<Trajectory>& data);

}  // namespace immfm::coupling
