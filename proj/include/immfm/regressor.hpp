// SPDX-License-Identifier: Apache-2.0
#pragma once

// MLP regressor for the SDE components: a shared trunk over
// [time embedding, state, conditioning] with three affine heads producing the
// flow drift v, the score s and the diffusion g = softplus(.) + g_min.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "immfm/autodiff.hpp"
#include "immfm/trajectory.hpp"

namespace immfm::model {

enum class Activation { tanh, relu };

struct ModelConfig {
  std::size_t state_dim = 2;
  /// Static covariates appended to the conditioning state.
  std::size_t extras_dim = 0;
  std::size_t hidden_width = 128;
  std::size_t hidden_layers = 3;
  Activation activation = Activation::tanh;
  std::size_t time_embed_dim = 16;
  double max_frequency = 100.0;
  double g_min = 1e-4;
  /// Path noise scale the model was trained with; stored for checkpoints.
  double sigma0 = 0.1;

  std::size_t cond_dim() const noexcept { return state_dim + extras_dim; }
  std::size_t input_dim() const noexcept { return time_embed_dim + state_dim + cond_dim(); }
  void validate() const;
};

/// Previous observed state (zero before the first observation) plus covariates.
struct Conditioning {
  Vec prev_state;
  Vec extras;

  static Conditioning none(std::size_t state_dim, std::size_t extras_dim = 0) {
    return {Vec(state_dim, 0.0), Vec(extras_dim, 0.0)};
  }
};

/// Interleaved [sin(w_0 t), cos(w_0 t), sin(w_1 t), ...] with w_k geometric
/// from 1 to max_frequency. Throws ContractError for odd or zero dim.
Vec time_embedding(double t, std::size_t dim, double max_frequency);

struct Parameter {
  std::string name;
  Tensor value;
};

struct Prediction {
  Vec v;
  Vec s;
  Vec g;
};

class SdeModel {
 public:
  SdeModel(ModelConfig config, std::uint64_t seed);
  /// Builds a model from already-initialised parameters (checkpoint load).
  SdeModel(ModelConfig config, std::vector<Parameter> parameters);

  struct Heads {
    ad::Var v;
    ad::Var s;
    ad::Var g;
  };

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  /// Puts every parameter on the tape, as variables when `trainable`.
  std::vector<ad::Var> bind(ad::Tape& tape, bool trainable) const;

  /// Batched forward. `x` is n x d, `cond` is n x cond_dim, one time per row.
  Heads forward(ad::Tape& tape, std::span<const ad::Var> params, std::span<const double> times,
                ad::Var x, ad::Var cond) const;

  Prediction predict(double t, const Vec& x, const Conditioning& c) const;

  Tensor conditioning_row(const Conditioning& c) const;

 private:
  static std::vector<Parameter> layout(const ModelConfig& config);

  ModelConfig config_;
  std::vector<Parameter> params_;
};

}  // namespace immfm::model
