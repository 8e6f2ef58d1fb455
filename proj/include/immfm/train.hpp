// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "json.hpp"

#include "immfm/coupling.hpp"
#include "immfm/objective.hpp"
#include "immfm/paths.hpp"
#include "immfm/regressor.hpp"

namespace immfm::train {

enum class Optimizer { sgd, adam };

/// One "epoch" is one optimizer step on a freshly sampled mini-batch.
struct TrainConfig {
  std::size_t epochs = 3000;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double beta = 0.01;
  double sigma0 = 0.1;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t warmup_epochs = 100;
  objective::UncertaintyHorizon uncertainty_horizon = objective::UncertaintyHorizon::from_current;
  paths::PathKind path = paths::PathKind::quadratic;
  bool subtrajectory_augmentation = false;
  std::size_t hidden_width = 128;
  std::size_t hidden_layers = 3;
  model::Activation activation = model::Activation::tanh;
  std::size_t time_embed_dim = 16;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys throw ParseError.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossRecord {
  std::size_t step = 0;
  double flow = 0.0;
  double score = 0.0;
  double uncertainty = 0.0;
  double total = 0.0;
};

/// Marginal samples plus the coupling that pairs them into trajectories.
struct TrainingData {
  coupling::MarginalSet marginals;
  coupling::CouplingPlan plan;

  static TrainingData from_trajectories(const std::vector<Trajectory>& data);
  Trajectory trajectory(const std::vector<std::size_t>& path) const;
};

struct TrainResult {
  model::SdeModel model;
  std::vector<LossRecord> history;
  objective::LossBreakdown final_loss;
};

/// Index j with t in [t_j, t_{j+1}); the final time maps to the last segment.
std::size_t locate_segment(const std::vector<double>& times, double t);

/// Segment, time, path sample and conditioning for one trajectory.
objective::TrainingSample sample_training_tuple(const Trajectory& z, double sigma0,
                                                paths::PathKind kind, Rng& rng,
                                                std::size_t extras_dim = 0);

/// Mini-batch of training tuples drawn through the coupling.
std::vector<objective::TrainingSample> sample_batch(const TrainingData& data,
                                                    const coupling::TrajectorySampler& sampler,
                                                    const TrainConfig& cfg, Rng& rng);

/// Deterministic given cfg.seed. Throws NumericError on a non-finite loss.
TrainResult train(const TrainingData& data, const TrainConfig& cfg);

model::ModelConfig model_config_for(const TrainConfig& cfg, std::size_t state_dim);

void write_history_csv(std::ostream& out, const std::vector<LossRecord>& history);

}  // namespace immfm::train
