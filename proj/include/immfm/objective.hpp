// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training objective: conditional flow matching + weighted conditional score
// matching, plus the diffusion-uncertainty term that matches g^2 against the
// squared one-step prediction error of the assembled SDE drift.

#include <span>
#include <utility>
#include <vector>

#include "immfm/autodiff.hpp"
#include "immfm/paths.hpp"
#include "immfm/regressor.hpp"

namespace immfm::objective {

/// from_current predicts x_next from (t, x) over t_next - t; full_segment
/// predicts from x_i over the whole segment length.
enum class UncertaintyHorizon { from_current, full_segment };

struct LossBreakdown {
  double flow_term = 0.0;
  double score_term = 0.0;
  double uncertainty_term = 0.0;
  double total = 0.0;
  /// Score weight; the batch mean when several samples are reduced.
  double lambda_t = 0.0;
};

/// u = v + (g^2 / 2) s, elementwise.
Vec assemble_drift(const Vec& v, const Vec& s, const Vec& g);
ad::Var assemble_drift(ad::Var v, ad::Var s, ad::Var g);

/// lambda(t) = 2 sigma(t) / sigma0^2.
double score_weight(const paths::PathSegment& seg, double t);

struct TrainingSample {
  paths::PathSegment seg;
  double t = 0.0;
  Vec x;
  model::Conditioning c;
};

/// Per-row regression targets of a batch, as dense tensors.
struct BatchTargets {
  std::vector<double> times;
  Tensor x;          // n x d
  Tensor cond;       // n x cond_dim
  Tensor velocity;   // n x d
  Tensor score;      // n x d
  Tensor lambda_sq;  // n x 1
  Tensor horizon;    // n x 1
  Tensor anchor;     // n x d, start of the one-step prediction
  Tensor endpoint;   // n x d, x_next
  UncertaintyHorizon mode = UncertaintyHorizon::from_current;
};

BatchTargets build_targets(std::span<const TrainingSample> batch, const model::ModelConfig& config,
                           UncertaintyHorizon mode);

struct LossVars {
  ad::Var flow;
  ad::Var score;
  ad::Var uncertainty;
  ad::Var total;
};

/// Batch-mean loss terms on the tape. `x` must hold targets.x; with
/// from_current it doubles as the prediction anchor so gradients reach it.
LossVars loss_terms(ad::Tape& tape, const model::SdeModel::Heads& heads, ad::Var x,
                    const BatchTargets& targets, double beta);

/// Per-sample conditional flow and score terms.
std::pair<double, double> csde_loss(const model::SdeModel& model, const paths::PathSegment& seg,
                                    double t, const Vec& x, const model::Conditioning& c);

/// Per-sample uncertainty term: sum_k (g_k^2 - r_k^2)^2.
double uncertainty_loss(const model::SdeModel& model, const paths::PathSegment& seg, double t,
                        const Vec& x, const model::Conditioning& c,
                        UncertaintyHorizon mode = UncertaintyHorizon::from_current);

/// Mean over the batch of flow + score + beta * uncertainty.
LossBreakdown total_loss(const model::SdeModel& model, std::span<const TrainingSample> batch,
                         double beta,
                         UncertaintyHorizon mode = UncertaintyHorizon::from_current);

}  // namespace immfm::objective
