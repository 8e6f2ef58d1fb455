// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic 2-D benchmarks and CSV ingestion.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "immfm/coupling.hpp"
#include "immfm/trajectory.hpp"

namespace immfm::data {

enum class Shape { s_curve, sigma_curve };

inline constexpr std::array<double, 8> kBenchmarkTimes = {0.0,  0.17, 0.29, 0.45,
                                                          0.65, 0.71, 0.85, 1.0};

struct SyntheticSpec {
  Shape shape = Shape::s_curve;
  std::size_t n_per_marginal = 200;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  std::vector<double> times{kBenchmarkTimes.begin(), kBenchmarkTimes.end()};

  void validate() const;
};

/// Cluster centers, one per time of the benchmark grid.
std::vector<Vec> centers(Shape shape);

struct SyntheticData {
  /// Rows shuffled independently per time, so the pairing is not visible.
  coupling::MarginalSet marginals;
  /// Latent subjects; subject k sits at centers[i] + offset_k at every time i.
  std::vector<Trajectory> truth;
  /// subject_of[i][r] is the subject behind marginals.samples[i][r].
  std::vector<std::vector<std::size_t>> subject_of;
  std::vector<Vec> centers;
};

SyntheticData generate(const SyntheticSpec& spec);

Shape parse_shape(const std::string& name);
std::string shape_name(Shape shape);

/// One parsed `subject_id,time,dim_0,...` row.
struct Observation {
  std::string subject_id;
  double time = 0.0;
  Vec state;
};

/// Parses the CSV schema with header. Extra trailing columns named
/// `marginal_index` or `is_forecast` are accepted and ignored.
/// Throws ParseError with the line number on malformed rows and on
/// inconsistent dimensions.
std::vector<Observation> read_observations(std::istream& in);
std::vector<Observation> read_observations_file(const std::string& path);

/// Rows grouped by subject and sorted by time; subjects with fewer than two
/// observations are dropped. Duplicate (subject, time) rows throw ParseError.
std::vector<Trajectory> group_trajectories(const std::vector<Observation>& rows);

/// Rows grouped by distinct time, ignoring subject ids, with uniform weights.
coupling::MarginalSet group_marginals(const std::vector<Observation>& rows);

std::vector<Trajectory> load_trajectories(const std::string& path);
coupling::MarginalSet load_marginals(const std::string& path);

/// Writes `subject_id,time,dim_0,...,marginal_index` in the shuffled row order.
void write_csv(std::ostream& out, const SyntheticData& data);
/// Writes trajectories in the ingestion schema.
void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& data);

}  // namespace immfm::data
