// SPDX-License-Identifier: Apache-2.0
#include "immfm/regressor.hpp"

#include <cmath>

#include "immfm/error.hpp"
#include "immfm/rng.hpp"

namespace immfm::model {

void ModelConfig::validate() const {
  if (state_dim == 0) throw ContractError("state_dim must be positive");
  if (hidden_width == 0 || hidden_layers == 0) throw ContractError("trunk must be nonempty");
  if (time_embed_dim == 0 || time_embed_dim % 2 != 0) {
    throw ContractError("time embedding dimension must be even and positive");
  }
  if (!(max_frequency >= 1.0)) throw ContractError("max_frequency must be >= 1");
  if (!(g_min > 0.0)) throw ContractError("g_min must be positive");
}

Vec time_embedding(double t, std::size_t dim, double max_frequency) {
  if (dim == 0 || dim % 2 != 0) {
    throw ContractError("time embedding dimension must be even, got " + std::to_string(dim));
  }
  const std::size_t half = dim / 2;
  Vec out(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double frac = half == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(half - 1);
    const double w = std::pow(max_frequency, frac);
    out[2 * k] = std::sin(w * t);
    out[2 * k + 1] = std::cos(w * t);
  }
  return out;
}

std::vector<Parameter> SdeModel::layout(const ModelConfig& config) {
  std::vector<Parameter> params;
  std::size_t fan_in = config.input_dim();
  for (std::size_t l = 0; l < config.hidden_layers; ++l) {
    const std::string prefix = "trunk." + std::to_string(l);
    params.push_back({prefix + ".weight", Tensor(fan_in, config.hidden_width)});
    params.push_back({prefix + ".bias", Tensor(1, config.hidden_width)});
    fan_in = config.hidden_width;
  }
  for (const char* head : {"drift", "score", "diffusion"}) {
    params.push_back({std::string("head.") + head + ".weight",
                      Tensor(config.hidden_width, config.state_dim)});
    params.push_back({std::string("head.") + head + ".bias", Tensor(1, config.state_dim)});
  }
  return params;
}

SdeModel::SdeModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  params_ = layout(config_);
  Rng rng = make_stream(seed, 0x1417);
  // Trunk: U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Heads stay zero.
  for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
    for (auto* p : {&params_[2 * l].value, &params_[2 * l + 1].value}) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(params_[2 * l].value.rows()));
      for (double& w : p->data()) w = uniform(rng, -bound, bound);
    }
  }
}

SdeModel::SdeModel(ModelConfig config, std::vector<Parameter> parameters)
    : config_(config), params_(std::move(parameters)) {
  config_.validate();
  const auto expected = layout(config_);
  if (expected.size() != params_.size()) {
    throw DimensionError("expected " + std::to_string(expected.size()) + " parameter arrays, got " +
                         std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != params_[i].name || !expected[i].value.same_shape(params_[i].value)) {
      throw DimensionError("parameter " + std::to_string(i) + " is " + params_[i].name +
                           params_[i].value.shape_string() + ", expected " + expected[i].name +
                           expected[i].value.shape_string());
    }
  }
}

std::size_t SdeModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

std::vector<ad::Var> SdeModel::bind(ad::Tape& tape, bool trainable) const {
  std::vector<ad::Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) {
    vars.push_back(trainable ? tape.variable(p.value) : tape.constant(p.value));
  }
  return vars;
}

SdeModel::Heads SdeModel::forward(ad::Tape& tape, std::span<const ad::Var> params,
                                  std::span<const double> times, ad::Var x,
                                  ad::Var cond) const {
  const std::size_t n = x.rows();
  if (params.size() != params_.size()) throw ContractError("forward: parameter count mismatch");
  if (x.cols() != config_.state_dim || times.size() != n) {
    throw DimensionError("forward: x is " + x.value().shape_string() + " with " +
                         std::to_string(times.size()) + " times, model state_dim " +
                         std::to_string(config_.state_dim));
  }
  if (cond.rows() != n || cond.cols() != config_.cond_dim()) {
    throw DimensionError("forward: conditioning is " + cond.value().shape_string() +
                         ", expected " + std::to_string(n) + "x" +
                         std::to_string(config_.cond_dim()));
  }
  Tensor embed(n, config_.time_embed_dim);
  for (std::size_t r = 0; r < n; ++r) {
    if (!(times[r] >= -1e-12 && times[r] <= 1.0 + 1e-12)) {
      throw DomainError("forward: time " + std::to_string(times[r]) + " outside [0, 1]");
    }
    const Vec e = time_embedding(times[r], config_.time_embed_dim, config_.max_frequency);
    std::copy(e.begin(), e.end(), embed.row(r).begin());
  }
  const ad::Var parts[] = {tape.constant(std::move(embed)), x, cond};
  ad::Var h = ad::concat_cols(parts);
  std::size_t p = 0;
  for (std::size_t l = 0; l < config_.hidden_layers; ++l, p += 2) {
    h = ad::add(ad::matmul(h, params[p]), ad::broadcast_rows(params[p + 1], n));
    h = config_.activation == Activation::tanh ? ad::tanh(h) : ad::relu(h);
  }
  auto affine = [&](std::size_t idx) {
    return ad::add(ad::matmul(h, params[idx]), ad::broadcast_rows(params[idx + 1], n));
  };
  Heads heads{affine(p), affine(p + 2), affine(p + 4)};
  heads.g = ad::add_scalar(ad::softplus(heads.g), config_.g_min);
  return heads;
}

Tensor SdeModel::conditioning_row(const Conditioning& c) const {
  if (c.prev_state.size() != config_.state_dim || c.extras.size() != config_.extras_dim) {
    throw DimensionError("conditioning has " + std::to_string(c.prev_state.size()) + "+" +
                         std::to_string(c.extras.size()) + " entries, model expects " +
                         std::to_string(config_.state_dim) + "+" +
                         std::to_string(config_.extras_dim));
  }
  Tensor row(1, config_.cond_dim());
  std::copy(c.prev_state.begin(), c.prev_state.end(), row.data().begin());
  std::copy(c.extras.begin(), c.extras.end(),
            row.data().begin() + static_cast<std::ptrdiff_t>(config_.state_dim));
  return row;
}

Prediction SdeModel::predict(double t, const Vec& x, const Conditioning& c) const {
  if (x.size() != config_.state_dim) {
    throw DimensionError("predict: state has dimension " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(config_.state_dim));
  }
  ad::Tape tape;
  const auto params = bind(tape, false);
  const double times[] = {t};
  const Heads h = forward(tape, params, times, tape.constant(Tensor::row_vector(x)),
                          tape.constant(conditioning_row(c)));
  auto to_vec = [](const Tensor& v) { return Vec(v.data().begin(), v.data().end()); };
  return {to_vec(h.v.value()), to_vec(h.s.value()), to_vec(h.g.value())};
}

}  // namespace immfm::model
