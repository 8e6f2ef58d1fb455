// SPDX-License-Identifier: Apache-2.0
#pragma once

// Autoregressive forecasting with Euler (ODE) or Euler-Maruyama (SDE) steps.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "immfm/regressor.hpp"
#include "immfm/trajectory.hpp"

namespace immfm::simulate {

enum class Mode { ode, sde };

/// O: drift-only Euler. S: SDE with a fixed diffusion g_const. SU: SDE with the learned g.
enum class Variant { o, s, su };

/// per_step feeds the previous integration state back as conditioning after
/// every step. per_knot keeps the state reached at the last passed knot
/// time, matching how conditioning is built during training.
enum class ConditioningUpdate { per_step, per_knot };

struct ForecastRequest {
  Trajectory prefix;
  double t_end = 1.0;
  double dt = 0.01;
  Mode mode = Mode::ode;
  Variant variant = Variant::su;
  std::uint64_t seed = 0;
  /// Fixed diffusion used by the S variant.
  double g_const = 0.1;
  ConditioningUpdate conditioning = ConditioningUpdate::per_step;
  /// Observation grid used by per_knot; the prefix times are always knots.
  std::vector<double> knots;
  Vec extras;

  void validate() const;
};

struct Forecast {
  Trajectory trajectory;
  /// trajectory.states[k] is forecast for k >= prefix_length.
  std::size_t prefix_length = 0;
};

/// Field queried by the integrator: (t, x, c) -> (v, s, g).
using Field = std::function<model::Prediction(double, const Vec&, const model::Conditioning&)>;

Forecast forecast(const Field& field, const ForecastRequest& req);
Forecast forecast(const model::SdeModel& model, const ForecastRequest& req);

/// Independent rollouts, rollout k seeded from (req.seed, k).
/// The serial version is the reference the parallel one must reproduce bit for bit.
std::vector<Forecast> forecast_many_serial(const model::SdeModel& model,
                                           std::span<const ForecastRequest> requests);
std::vector<Forecast> forecast_many_parallel(const model::SdeModel& model,
                                             std::span<const ForecastRequest> requests);

/// Per requested time, mean squared per-coordinate error between the states
/// nearest to that time (within `tolerance`). Throws DomainError when either
/// trajectory has no state there.
std::vector<double> evaluate_forecast(const Trajectory& pred, const Trajectory& truth,
                                      std::span<const double> at_times, double tolerance);

/// Index of the state nearest to t, or npos when none lies within tolerance.
std::size_t nearest_index(const Trajectory& tr, double t, double tolerance);

/// `time,dim_0,...,dim_{d-1},is_forecast`.
void write_forecast_csv(std::ostream& out, const Forecast& f);

}  // namespace immfm::simulate
