// SPDX-License-Identifier: Apache-2.0
#include "immfm/objective.hpp"

#include "immfm/error.hpp"

namespace immfm::objective {

Vec assemble_drift(const Vec& v, const Vec& s, const Vec& g) {
  if (v.size() != s.size() || v.size() != g.size()) {
    throw DimensionError("assemble_drift: sizes " + std::to_string(v.size()) + ", " +
                         std::to_string(s.size()) + ", " + std::to_string(g.size()));
  }
  Vec u(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) u[k] = v[k] + 0.5 * g[k] * g[k] * s[k];
  return u;
}

ad::Var assemble_drift(ad::Var v, ad::Var s, ad::Var g) {
  return ad::add(v, ad::scale(ad::mul(ad::square(g), s), 0.5));
}

double score_weight(const paths::PathSegment& seg, double t) {
  const double sigma = paths::sigma_at(seg, t);
  return 2.0 * sigma / (seg.sigma0 * seg.sigma0);
}

BatchTargets build_targets(std::span<const TrainingSample> batch, const model::ModelConfig& config,
                           UncertaintyHorizon mode) {
  if (batch.empty()) throw DomainError("empty batch");
  const std::size_t n = batch.size();
  const std::size_t d = config.state_dim;
  BatchTargets out;
  out.mode = mode;
  out.times.resize(n);
  out.x = Tensor(n, d);
  out.cond = Tensor(n, config.cond_dim());
  out.velocity = Tensor(n, d);
  out.score = Tensor(n, d);
  out.lambda_sq = Tensor(n, 1);
  out.horizon = Tensor(n, 1);
  out.anchor = Tensor(n, d);
  out.endpoint = Tensor(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const TrainingSample& s = batch[r];
    if (s.x.size() != d || s.seg.dim() != d) {
      throw DimensionError("batch item " + std::to_string(r) + " has the wrong state dimension");
    }
    const Vec tv = paths::target_velocity(s.seg, s.t, s.x);
    const Vec ts = paths::target_score(s.seg, s.t, s.x);
    const double lambda = score_weight(s.seg, s.t);
    out.times[r] = s.t;
    out.lambda_sq(r, 0) = lambda * lambda;
    const bool current = mode == UncertaintyHorizon::from_current;
    out.horizon(r, 0) = current ? s.seg.t_next - s.t : s.seg.t_next - s.seg.t_i;
    const Vec& anchor = current ? s.x : s.seg.x_i;
    for (std::size_t k = 0; k < d; ++k) {
      out.x(r, k) = s.x[k];
      out.velocity(r, k) = tv[k];
      out.score(r, k) = ts[k];
      out.anchor(r, k) = anchor[k];
      out.endpoint(r, k) = s.seg.x_next[k];
    }
    if (s.c.prev_state.size() != d || s.c.extras.size() != config.extras_dim) {
      throw DimensionError("batch item " + std::to_string(r) + " has malformed conditioning");
    }
    for (std::size_t k = 0; k < d; ++k) out.cond(r, k) = s.c.prev_state[k];
    for (std::size_t k = 0; k < config.extras_dim; ++k) out.cond(r, d + k) = s.c.extras[k];
  }
  return out;
}

LossVars loss_terms(ad::Tape& tape, const model::SdeModel::Heads& heads, ad::Var x,
                    const BatchTargets& targets, double beta) {
  const std::size_t n = targets.x.rows();
  const std::size_t d = targets.x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  const ad::Var flow_err = ad::sub(heads.v, tape.constant(targets.velocity));
  const ad::Var flow = ad::scale(ad::sum(ad::square(flow_err)), inv_n);

  const ad::Var score_err = ad::sub(heads.s, tape.constant(targets.score));
  const ad::Var lambda_sq = ad::broadcast_cols(tape.constant(targets.lambda_sq), d);
  const ad::Var score = ad::scale(ad::sum(ad::mul(lambda_sq, ad::square(score_err))), inv_n);

  const ad::Var u = assemble_drift(heads.v, heads.s, heads.g);
  const ad::Var anchor =
      targets.mode == UncertaintyHorizon::from_current ? x : tape.constant(targets.anchor);
  const ad::Var horizon = ad::broadcast_cols(tape.constant(targets.horizon), d);
  const ad::Var residual =
      ad::sub(ad::add(anchor, ad::mul(horizon, u)), tape.constant(targets.endpoint));
  const ad::Var mismatch = ad::sub(ad::square(heads.g), ad::square(residual));
  const ad::Var uncertainty = ad::scale(ad::sum(ad::square(mismatch)), inv_n);

  const ad::Var total = ad::add(ad::add(flow, score), ad::scale(uncertainty, beta));
  return {flow, score, uncertainty, total};
}

namespace {

LossBreakdown evaluate_batch(const model::SdeModel& model, std::span<const TrainingSample> batch,
                             double beta, UncertaintyHorizon mode) {
  const BatchTargets targets = build_targets(batch, model.config(), mode);
  ad::Tape tape;
  const auto params = model.bind(tape, false);
  const ad::Var x = tape.constant(targets.x);
  const auto heads = model.forward(tape, params, targets.times, x, tape.constant(targets.cond));
  const LossVars lv = loss_terms(tape, heads, x, targets, beta);
  LossBreakdown out;
  out.flow_term = lv.flow.value().item();
  out.score_term = lv.score.value().item();
  out.uncertainty_term = lv.uncertainty.value().item();
  out.total = lv.total.value().item();
  double lambda = 0.0;
  for (const auto& s : batch) lambda += score_weight(s.seg, s.t);
  out.lambda_t = lambda / static_cast<double>(batch.size());
  return out;
}

}  // namespace

std::pair<double, double> csde_loss(const model::SdeModel& model, const paths::PathSegment& seg,
                                    double t, const Vec& x, const model::Conditioning& c) {
  const TrainingSample sample{seg, t, x, c};
  const LossBreakdown b = evaluate_batch(model, {&sample, 1}, 1.0,
                                         UncertaintyHorizon::from_current);
  return {b.flow_term, b.score_term};
}

double uncertainty_loss(const model::SdeModel& model, const paths::PathSegment& seg, double t,
                        const Vec& x, const model::Conditioning& c, UncertaintyHorizon mode) {
  const TrainingSample sample{seg, t, x, c};
  return evaluate_batch(model, {&sample, 1}, 1.0, mode).uncertainty_term;
}

LossBreakdown total_loss(const model::SdeModel& model, std::span<const TrainingSample> batch,
                         double beta, UncertaintyHorizon mode) {
  if (!(beta > 0.0)) throw DomainError("beta must be positive");
  if (batch.empty()) throw DomainError("empty batch");
  return evaluate_batch(model, batch, beta, mode);
}

}  // namespace immfm::objective
