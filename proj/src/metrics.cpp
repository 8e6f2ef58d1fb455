// SPDX-License-Identifier: Apache-2.0
#include "immfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "immfm/error.hpp"

namespace immfm::metrics {

double trajectory_mse(const Trajectory& pred, const Trajectory& truth) {
  if (pred.size() != truth.size() || pred.size() == 0) {
    throw DomainError("trajectories are not aligned: " + std::to_string(pred.size()) + " vs " +
                      std::to_string(truth.size()) + " states");
  }
  if (pred.dim() != truth.dim()) throw DimensionError("trajectories differ in dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::abs(pred.times[i] - truth.times[i]) > 1e-9) {
      throw DomainError("trajectories are not aligned at index " + std::to_string(i));
    }
    for (std::size_t k = 0; k < pred.dim(); ++k) {
      const double e = pred.states[i][k] - truth.states[i][k];
      s += e * e;
    }
  }
  return s / static_cast<double>(pred.size() * pred.dim());
}

double wasserstein2_empirical(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  ot::OtOptions opt;
  opt.solver = ot::Solver::exact;
  const auto r = ot::pairwise_ot(ot::WeightedPoints::uniform(a), ot::WeightedPoints::uniform(b), opt);
  return std::sqrt(std::max(0.0, r.cost));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

Intersections density_intersections(double mu1, double sigma1, double mu2, double sigma2) {
  const double v1 = sigma1 * sigma1;
  const double v2 = sigma2 * sigma2;
  const double a = v2 - v1;
  if (a == 0.0) throw DomainError("equal variances have at most one intersection");
  const double b = mu1 * v2 - mu2 * v1;
  const double dmu = mu1 - mu2;
  const double root = sigma1 * sigma2 * std::sqrt(dmu * dmu + a * std::log(v2 / v1));
  const double c = mu1 * mu1 * v2 - mu2 * mu2 * v1 - v1 * v2 * std::log(v2 / v1);
  // Roots of a x^2 - 2 b x + c = 0 without cancellation.
  const double q = b + std::copysign(root, b);
  if (q == 0.0) return {0.0, 0.0};
  const double r_q = q / a;
  const double r_c = c / q;
  return b >= 0.0 ? Intersections{r_q, r_c} : Intersections{r_c, r_q};
}

double overlap_coefficient(double mu1, double sigma1, double mu2, double sigma2) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw DomainError("standard deviations must be positive");
  if (std::abs(sigma1 * sigma1 - sigma2 * sigma2) < 1e-12) {
    const double s = 0.5 * (sigma1 + sigma2);
    return 2.0 * normal_cdf(-std::abs(mu1 - mu2) / std::sqrt(2.0 * s * s));
  }
  const auto [c1, c2] = density_intersections(mu1, sigma1, mu2, sigma2);
  const auto f1 = [&](double x) { return normal_cdf((x - mu1) / sigma1); };
  const auto f2 = [&](double x) { return normal_cdf((x - mu2) / sigma2); };
  const double ovl = (1.0 - f1(c1) + f2(c1)) - (f2(c2) - f1(c2));
  return std::clamp(ovl, 0.0, 1.0);
}

}  // namespace immfm::metrics
