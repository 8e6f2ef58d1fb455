// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command implementations behind the `immfm` tool. Each returns a process
// exit code and reports failures on standard error.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "immfm/trajectory.hpp"

namespace immfm::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kData = 3;
inline constexpr int kNumeric = 4;

struct GenerateOptions {
  std::string shape = "s";
  std::size_t n = 200;
  double noise = 0.05;
  std::uint64_t seed = 0;
  std::string out;
};

struct CoupleOptions {
  std::string data;
  std::string out;
  std::string solver = "auto";
  double eps = 0.0;
};

struct TrainOptions {
  std::string data;
  std::string coupling;
  std::string config;
  std::string out_model;
  std::string out_history;
  std::optional<std::uint64_t> seed;
};

struct ForecastOptions {
  std::string model;
  std::string prefix;
  /// Use only the first k observations of every subject; 0 keeps all.
  std::size_t prefix_length = 0;
  double t_end = 1.0;
  double dt = 0.01;
  std::string mode = "ode";
  std::string variant = "su";
  std::uint64_t seed = 0;
  std::optional<double> g_const;
  std::string conditioning = "per_step";
  std::string out;
};

struct EvaluateOptions {
  std::string pred;
  std::string truth;
  std::string report;
  double dt = 0.01;
};

struct VerifyMmotOptions {
  std::size_t seeds = 100;
  std::uint64_t seed = 0;
};

struct PlotOptions {
  std::string trajectories;
  std::string marginals;
  std::string out_svg;
};

int cmd_generate(const GenerateOptions& o);
int cmd_couple(const CoupleOptions& o);
int cmd_train(const TrainOptions& o);
int cmd_forecast(const ForecastOptions& o);
int cmd_evaluate(const EvaluateOptions& o);
int cmd_verify_mmot(const VerifyMmotOptions& o);
int cmd_plot(const PlotOptions& o);

/// Forecast files: `time,...,is_forecast` for one subject, with a leading
/// `subject_id` column for several.
struct ForecastRow {
  std::string subject_id;
  double time;
  Vec state;
  bool is_forecast;
};
std::vector<ForecastRow> read_forecast_csv(std::istream& in);

/// One random small multi-marginal instance checked against brute force.
struct MmotCheck {
  double marginal_residual = 0.0;
  double cost_gap = 0.0;
  std::size_t times = 0;
};
MmotCheck check_mmot_instance(std::uint64_t seed);
inline constexpr double kMmotTolerance = 1e-8;

/// Parses argv and dispatches to the commands above.
int run(int argc, char** argv);

}  // namespace immfm::cli
