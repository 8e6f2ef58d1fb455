// SPDX-License-Identifier: Apache-2.0
#include "immfm/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "immfm/error.hpp"

namespace immfm::train {

namespace {

const char* to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }
const char* to_string(objective::UncertaintyHorizon h) {
  return h == objective::UncertaintyHorizon::from_current ? "from_current" : "full_segment";
}
const char* to_string(paths::PathKind k) {
  return k == paths::PathKind::quadratic ? "quadratic" : "linear";
}
const char* to_string(model::Activation a) {
  return a == model::Activation::tanh ? "tanh" : "relu";
}

template <typename T>
T get_positive_int(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ParseError("config key '" + key + "' must be a nonnegative integer");
  }
  return static_cast<T>(v.get<long long>());
}

double get_number(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw ParseError("config key '" + key + "' must be a number");
  return v.get<double>();
}

std::string get_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw ParseError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw DomainError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be positive");
  if (!(beta > 0.0)) throw DomainError("beta must be positive");
  if (!(sigma0 > 0.0)) throw DomainError("sigma0 must be positive");
  if (warmup_epochs > epochs && epochs > 0) {
    throw DomainError("warmup_epochs must not exceed epochs");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw DomainError("adam moment decays must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw DomainError("adam_epsilon must be positive");
  if (hidden_width == 0 || hidden_layers == 0) throw DomainError("trunk must be nonempty");
  if (time_embed_dim == 0 || time_embed_dim % 2 != 0) {
    throw DomainError("time_embed_dim must be even and positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"epochs", epochs},
                        {"batch_size", batch_size},
                        {"learning_rate", learning_rate},
                        {"beta", beta},
                        {"sigma0", sigma0},
                        {"seed", seed},
                        {"optimizer", to_string(optimizer)},
                        {"adam_beta1", adam_beta1},
                        {"adam_beta2", adam_beta2},
                        {"adam_epsilon", adam_epsilon},
                        {"warmup_epochs", warmup_epochs},
                        {"uncertainty_horizon", to_string(uncertainty_horizon)},
                        {"path", to_string(path)},
                        {"subtrajectory_augmentation", subtrajectory_augmentation},
                        {"hidden_width", hidden_width},
                        {"hidden_layers", hidden_layers},
                        {"activation", to_string(activation)},
                        {"time_embed_dim", time_embed_dim}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  TrainConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") {
      cfg.epochs = get_positive_int<std::size_t>(v, key);
    } else if (key == "batch_size") {
      cfg.batch_size = get_positive_int<std::size_t>(v, key);
    } else if (key == "learning_rate") {
      cfg.learning_rate = get_number(v, key);
    } else if (key == "beta") {
      cfg.beta = get_number(v, key);
    } else if (key == "sigma0") {
      cfg.sigma0 = get_number(v, key);
    } else if (key == "seed") {
      cfg.seed = get_positive_int<std::uint64_t>(v, key);
    } else if (key == "optimizer") {
      const auto s = get_string(v, key);
      if (s == "adam") cfg.optimizer = Optimizer::adam;
      else if (s == "sgd") cfg.optimizer = Optimizer::sgd;
      else throw ParseError("optimizer must be 'adam' or 'sgd'");
    } else if (key == "adam_beta1") {
      cfg.adam_beta1 = get_number(v, key);
    } else if (key == "adam_beta2") {
      cfg.adam_beta2 = get_number(v, key);
    } else if (key == "adam_epsilon") {
      cfg.adam_epsilon = get_number(v, key);
    } else if (key == "warmup_epochs") {
      cfg.warmup_epochs = get_positive_int<std::size_t>(v, key);
    } else if (key == "uncertainty_horizon") {
      const auto s = get_string(v, key);
      if (s == "from_current") cfg.uncertainty_horizon = objective::UncertaintyHorizon::from_current;
      else if (s == "full_segment") cfg.uncertainty_horizon = objective::UncertaintyHorizon::full_segment;
      else throw ParseError("uncertainty_horizon must be 'from_current' or 'full_segment'");
    } else if (key == "path") {
      const auto s = get_string(v, key);
      if (s == "quadratic") cfg.path = paths::PathKind::quadratic;
      else if (s == "linear") cfg.path = paths::PathKind::linear;
      else throw ParseError("path must be 'quadratic' or 'linear'");
    } else if (key == "subtrajectory_augmentation") {
      if (!v.is_boolean()) throw ParseError("subtrajectory_augmentation must be a boolean");
      cfg.subtrajectory_augmentation = v.get<bool>();
    } else if (key == "hidden_width") {
      cfg.hidden_width = get_positive_int<std::size_t>(v, key);
    } else if (key == "hidden_layers") {
      cfg.hidden_layers = get_positive_int<std::size_t>(v, key);
    } else if (key == "activation") {
      const auto s = get_string(v, key);
      if (s == "tanh") cfg.activation = model::Activation::tanh;
      else if (s == "relu") cfg.activation = model::Activation::relu;
      else throw ParseError("activation must be 'tanh' or 'relu'");
    } else if (key == "time_embed_dim") {
      cfg.time_embed_dim = get_positive_int<std::size_t>(v, key);
    } else {
      throw ParseError("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainingData TrainingData::from_trajectories(const std::vector<Trajectory>& data) {
  return {coupling::marginals_from_trajectories(data), coupling::align_pre_paired(data)};
}

Trajectory TrainingData::trajectory(const std::vector<std::size_t>& path) const {
  Trajectory z;
  z.times = marginals.times;
  z.states.reserve(path.size());
  for (std::size_t i = 0; i < path.size(); ++i) z.states.push_back(marginals.samples[i][path[i]]);
  return z;
}

std::size_t locate_segment(const std::vector<double>& times, double t) {
  if (times.size() < 2) throw DomainError("need at least two times to locate a segment");
  if (t < times.front() || t > times.back()) {
    throw DomainError("time " + std::to_string(t) + " outside the trajectory span");
  }
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto j = static_cast<std::size_t>(it - times.begin());
  return std::min(j == 0 ? 0 : j - 1, times.size() - 2);
}

objective::TrainingSample sample_training_tuple(const Trajectory& z, double sigma0,
                                                paths::PathKind kind, Rng& rng,
                                                std::size_t extras_dim) {
  if (z.size() < 2) throw DomainError("training trajectory needs at least two observations");
  const std::size_t last = z.size() - 1;
  const double t_raw = uniform(rng, z.times.front(), z.times.back());
  const std::size_t j = locate_segment(z.times, t_raw);

  paths::PathSegment seg;
  seg.t_i = z.times[j];
  seg.t_next = z.times[j + 1];
  seg.x_i = z.states[j];
  seg.x_next = z.states[j + 1];
  if (j + 1 < last) {
    seg.t_after = z.times[j + 2];
    seg.x_after = z.states[j + 2];
  }
  seg.sigma0 = sigma0;
  seg.kind = kind;

  objective::TrainingSample out;
  out.t = paths::clamp_to_window(seg, t_raw);
  out.x = paths::sample_path_point(seg, out.t, rng);
  out.c = model::Conditioning::none(z.dim(), extras_dim);
  if (j > 0) out.c.prev_state = z.states[j - 1];
  out.seg = std::move(seg);
  return out;
}

std::vector<objective::TrainingSample> sample_batch(const TrainingData& data,
                                                    const coupling::TrajectorySampler& sampler,
                                                    const TrainConfig& cfg, Rng& rng) {
  std::vector<objective::TrainingSample> batch;
  batch.reserve(cfg.batch_size);
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    Trajectory z = data.trajectory(sampler.sample(rng));
    if (cfg.subtrajectory_augmentation && z.size() > 2) {
      // Uniform over all contiguous windows with at least two observations.
      const std::size_t n = z.size();
      const std::size_t windows = n * (n - 1) / 2;
      std::size_t pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(windows));
      pick = std::min(pick, windows - 1);
      std::size_t begin = 0, len = n;
      for (std::size_t s = 0, k = 0; s + 1 < n; ++s) {
        for (std::size_t e = s + 2; e <= n; ++e, ++k) {
          if (k == pick) {
            begin = s;
            len = e - s;
          }
        }
      }
      Trajectory w;
      w.times.assign(z.times.begin() + static_cast<std::ptrdiff_t>(begin),
                     z.times.begin() + static_cast<std::ptrdiff_t>(begin + len));
      w.states.assign(z.states.begin() + static_cast<std::ptrdiff_t>(begin),
                      z.states.begin() + static_cast<std::ptrdiff_t>(begin + len));
      z = std::move(w);
    }
    batch.push_back(sample_training_tuple(z, cfg.sigma0, cfg.path, rng));
  }
  return batch;
}

model::ModelConfig model_config_for(const TrainConfig& cfg, std::size_t state_dim) {
  model::ModelConfig mc;
  mc.state_dim = state_dim;
  mc.hidden_width = cfg.hidden_width;
  mc.hidden_layers = cfg.hidden_layers;
  mc.activation = cfg.activation;
  mc.time_embed_dim = cfg.time_embed_dim;
  mc.sigma0 = cfg.sigma0;
  return mc;
}

namespace {

class Optimiser {
 public:
  Optimiser(const TrainConfig& cfg, const std::vector<model::Parameter>& params) : cfg_(cfg) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.rows(), p.value.cols(), 0.0);
      v_.emplace_back(p.value.rows(), p.value.cols(), 0.0);
    }
  }

  void step(std::vector<model::Parameter>& params, const std::vector<Tensor>& grads, double lr) {
    ++t_;
    if (cfg_.optimizer == Optimizer::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].value.data();
        const auto g = grads[i].data();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
      }
      return;
    }
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto w = params[i].value.data();
      auto m = m_[i].data();
      auto v = v_[i].data();
      const auto g = grads[i].data();
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.adam_epsilon);
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace

TrainResult train(const TrainingData& data, const TrainConfig& cfg) {
  cfg.validate();
  data.marginals.validate();
  if (data.marginals.num_times() < 2) throw DomainError("training needs at least two timepoints");
  const coupling::TrajectorySampler sampler(data.plan);
  if (sampler.plan().sizes().size() != data.marginals.num_times()) {
    throw DimensionError("coupling and marginals disagree on the number of times");
  }

  TrainResult result{model::SdeModel(model_config_for(cfg, data.marginals.dim()), cfg.seed),
                     {},
                     {}};
  model::SdeModel& net = result.model;
  Optimiser opt(cfg, net.parameters());
  Rng rng = make_stream(cfg.seed, 0x7a11);

  for (std::size_t step = 0; step < cfg.epochs; ++step) {
    const auto batch = sample_batch(data, sampler, cfg, rng);
    const auto targets = objective::build_targets(batch, net.config(), cfg.uncertainty_horizon);
    ad::Tape tape;
    const auto params = net.bind(tape, true);
    const ad::Var x = tape.constant(targets.x);
    const auto heads = net.forward(tape, params, targets.times, x, tape.constant(targets.cond));
    const auto loss = objective::loss_terms(tape, heads, x, targets, cfg.beta);

    const double lr = cfg.warmup_epochs == 0
                          ? cfg.learning_rate
                          : cfg.learning_rate *
                                std::min(1.0, static_cast<double>(step + 1) /
                                                  static_cast<double>(cfg.warmup_epochs));
    LossRecord rec{step, loss.flow.value().item(), loss.score.value().item(),
                   loss.uncertainty.value().item(), loss.total.value().item()};
    if (!std::isfinite(rec.total)) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << " (learning rate " << lr << "): flow "
          << rec.flow << ", score " << rec.score << ", uncertainty " << rec.uncertainty
          << "; last batch first time " << batch.front().t;
      throw NumericError(msg.str());
    }
    tape.backward(loss.total);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
      if (!p.grad().all_finite()) {
        throw NumericError("non-finite gradient at step " + std::to_string(step) +
                           " (learning rate " + std::to_string(lr) + ")");
      }
      grads.push_back(p.grad());
    }
    opt.step(net.parameters(), grads, lr);
    result.history.push_back(rec);
    double lambda_mean = 0.0;
    for (double l2 : targets.lambda_sq.data()) lambda_mean += std::sqrt(l2);
    lambda_mean /= static_cast<double>(targets.lambda_sq.size());
    result.final_loss = {rec.flow, rec.score, rec.uncertainty, rec.total, lambda_mean};
  }
  return result;
}

void write_history_csv(std::ostream& out, const std::vector<LossRecord>& history) {
  out << "step,flow,score,uncertainty,total\n";
  out << std::setprecision(17);
  for (const auto& r : history) {
    out << r.step << ',' << r.flow << ',' << r.score << ',' << r.uncertainty << ',' << r.total
        << '\n';
  }
}

}  // namespace immfm::train
