// SPDX-License-Identifier: Apache-2.0
#include "immfm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "immfm/error.hpp"
#include "immfm/objective.hpp"
#include "immfm/rng.hpp"

namespace immfm::simulate {

void ForecastRequest::validate() const {
  prefix.validate();
  if (prefix.size() < 2) throw DomainError("forecast prefix needs at least two observations");
  const double t_last = prefix.times.back();
  if (!(t_end > t_last)) throw DomainError("t_end must exceed the last prefix time");
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  if (dt > t_end - t_last + 1e-12) throw DomainError("dt exceeds the forecast horizon");
  if (!(g_const >= 0.0)) throw DomainError("g_const must be nonnegative");
}

Forecast forecast(const Field& field, const ForecastRequest& req) {
  req.validate();
  const std::size_t d = req.prefix.dim();
  Forecast out;
  out.trajectory = req.prefix;
  out.prefix_length = req.prefix.size();

  const double t0 = req.prefix.times.back();
  const double horizon = req.t_end - t0;
  // Whole steps of size dt, then one partial step that lands on t_end.
  auto steps = static_cast<std::size_t>(std::floor(horizon / req.dt + 1e-9));
  const double covered = static_cast<double>(steps) * req.dt;
  const bool partial = horizon - covered > 1e-9 * std::max(1.0, horizon);
  const std::size_t total = steps + (partial ? 1 : 0);

  std::vector<double> knots = req.knots;
  knots.insert(knots.end(), req.prefix.times.begin(), req.prefix.times.end());
  std::sort(knots.begin(), knots.end());

  const bool stochastic = req.mode == Mode::sde && req.variant != Variant::o;
  Rng rng = make_stream(req.seed, 0);
  Vec x = req.prefix.states.back();
  model::Conditioning c{req.prefix.states[req.prefix.size() - 2], req.extras};
  if (c.extras.empty()) c.extras.clear();
  Vec knot_state = x;
  double t = t0;

  for (std::size_t i = 0; i < total; ++i) {
    const double t_next = (i + 1 == total) ? req.t_end : t0 + static_cast<double>(i + 1) * req.dt;
    const double h = t_next - t;
    const model::Prediction p = field(t, x, c);
    Vec x_new(d);
    if (!stochastic) {
      for (std::size_t k = 0; k < d; ++k) x_new[k] = x[k] + p.v[k] * h;
    } else {
      Vec g = req.variant == Variant::su ? p.g : Vec(d, req.g_const);
      const Vec u = objective::assemble_drift(p.v, p.s, g);
      const double sq = std::sqrt(h);
      for (std::size_t k = 0; k < d; ++k) {
        const double z = standard_normal(rng);
        x_new[k] = x[k] + u[k] * h + g[k] * sq * z;
      }
    }
    for (std::size_t k = 0; k < d; ++k) {
      if (!std::isfinite(x_new[k])) {
        throw NumericError("rollout produced a non-finite state at step " + std::to_string(i));
      }
    }
    if (req.conditioning == ConditioningUpdate::per_step) {
      c.prev_state = x;
    } else {
      // Crossing a knot makes the state at the previous knot the new conditioning.
      const auto crossed = std::find_if(knots.begin(), knots.end(), [&](double k) {
        return k > t + 1e-12 && k <= t_next + 1e-12;
      });
      if (crossed != knots.end()) {
        c.prev_state = knot_state;
        knot_state = x_new;
      }
    }
    x = std::move(x_new);
    t = t_next;
    out.trajectory.times.push_back(t);
    out.trajectory.states.push_back(x);
  }
  return out;
}

Forecast forecast(const model::SdeModel& model, const ForecastRequest& req) {
  if (req.prefix.dim() != model.config().state_dim) {
    throw DimensionError("prefix dimension " + std::to_string(req.prefix.dim()) +
                         " does not match the model's " +
                         std::to_string(model.config().state_dim));
  }
  ForecastRequest local = req;
  if (local.extras.size() != model.config().extras_dim) {
    if (!local.extras.empty()) throw DimensionError("extras do not match the model");
    local.extras.assign(model.config().extras_dim, 0.0);
  }
  return forecast(
      [&model](double t, const Vec& x, const model::Conditioning& c) {
        return model.predict(t, x, c);
      },
      local);
}

std::vector<Forecast> forecast_many_serial(const model::SdeModel& model,
                                           std::span<const ForecastRequest> requests) {
  std::vector<Forecast> out;
  out.reserve(requests.size());
  for (std::size_t k = 0; k < requests.size(); ++k) {
    ForecastRequest r = requests[k];
    r.seed = splitmix64(requests[k].seed) ^ splitmix64(k + 1);
    out.push_back(forecast(model, r));
  }
  return out;
}

std::vector<Forecast> forecast_many_parallel(const model::SdeModel& model,
                                             std::span<const ForecastRequest> requests) {
  std::vector<Forecast> out(requests.size());
  std::vector<std::exception_ptr> errors(requests.size());
  const auto n = static_cast<std::ptrdiff_t>(requests.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      ForecastRequest r = requests[k];
      r.seed = splitmix64(requests[k].seed) ^ splitmix64(k + 1);
      out[k] = forecast(model, r);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::size_t nearest_index(const Trajectory& tr, double t, double tolerance) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double gap = std::abs(tr.times[i] - t);
    if (gap < best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return best_gap <= tolerance ? best : std::numeric_limits<std::size_t>::max();
}

std::vector<double> evaluate_forecast(const Trajectory& pred, const Trajectory& truth,
                                      std::span<const double> at_times, double tolerance) {
  if (pred.dim() != truth.dim()) throw DimensionError("prediction and truth differ in dimension");
  std::vector<double> out;
  out.reserve(at_times.size());
  for (double t : at_times) {
    const std::size_t ip = nearest_index(pred, t, tolerance);
    const std::size_t it = nearest_index(truth, t, tolerance);
    if (ip == std::numeric_limits<std::size_t>::max() ||
        it == std::numeric_limits<std::size_t>::max()) {
      throw DomainError("no state within " + std::to_string(tolerance) + " of time " +
                        std::to_string(t));
    }
    double s = 0.0;
    for (std::size_t k = 0; k < pred.dim(); ++k) {
      const double e = pred.states[ip][k] - truth.states[it][k];
      s += e * e;
    }
    out.push_back(s / static_cast<double>(pred.dim()));
  }
  return out;
}

void write_forecast_csv(std::ostream& out, const Forecast& f) {
  const std::size_t d = f.trajectory.dim();
  out << "time";
  for (std::size_t k = 0; k < d; ++k) out << ",dim_" << k;
  out << ",is_forecast\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < f.trajectory.size(); ++i) {
    out << f.trajectory.times[i];
    for (double v : f.trajectory.states[i]) out << ',' << v;
    out << ',' << (i >= f.prefix_length ? 1 : 0) << '\n';
  }
}

}  // namespace immfm::simulate
