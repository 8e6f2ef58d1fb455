// SPDX-License-Identifier: Apache-2.0
#include "immfm/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "immfm/error.hpp"
#include "immfm/rng.hpp"

namespace immfm::data {

namespace {

// S: x = -0.8 sin(2 pi t), y = 1 - 2t sampled on the benchmark grid.
std::vector<Vec> s_centers() {
  std::vector<Vec> out;
  for (double t : kBenchmarkTimes) {
    out.push_back({-0.8 * std::sin(2.0 * std::numbers::pi * t), 1.0 - 2.0 * t});
  }
  return out;
}

// Sigma: a tail entering from the upper right, a loop through the lower half
// and back over the origin (the crossover at indices 2 and 6), then up-left.
const std::vector<Vec> kSigmaCenters = {
    {0.9, 0.6}, {0.35, 0.25}, {0.0, 0.0},  {-0.5, -0.5},
    {0.0, -0.9}, {0.45, -0.5}, {0.0, 0.0}, {-0.5, 0.45},
};

}  // namespace

void SyntheticSpec::validate() const {
  if (n_per_marginal == 0) throw DomainError("n_per_marginal must be positive");
  if (!(noise_std >= 0.0)) throw DomainError("noise_std must be nonnegative");
  if (times.size() != kBenchmarkTimes.size()) {
    throw DomainError("synthetic shapes have " + std::to_string(kBenchmarkTimes.size()) +
                      " marginals");
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0 || times[i] > 1.0) throw DomainError("times must lie in [0, 1]");
    if (i > 0 && !(times[i] > times[i - 1])) throw DomainError("times must strictly increase");
  }
}

std::vector<Vec> centers(Shape shape) {
  return shape == Shape::s_curve ? s_centers() : kSigmaCenters;
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.centers = centers(spec.shape);
  const std::size_t n = spec.n_per_marginal;
  const std::size_t m = spec.times.size();

  Rng noise = make_stream(spec.seed, 1);
  std::vector<Vec> offsets(n);
  for (auto& o : offsets) o = {spec.noise_std * standard_normal(noise),
                               spec.noise_std * standard_normal(noise)};

  out.truth.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    Trajectory& tr = out.truth[k];
    tr.subject_id = "s" + std::to_string(k);
    tr.times = spec.times;
    for (std::size_t i = 0; i < m; ++i) {
      tr.states.push_back({out.centers[i][0] + offsets[k][0], out.centers[i][1] + offsets[k][1]});
    }
  }

  Rng shuffle = make_stream(spec.seed, 2);
  out.marginals.times = spec.times;
  out.marginals.samples.resize(m);
  out.subject_of.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto& perm = out.subject_of[i];
    perm.resize(n);
    for (std::size_t k = 0; k < n; ++k) perm[k] = k;
    // Fisher-Yates with our own uniform draw keeps the order platform independent.
    for (std::size_t k = n; k > 1; --k) {
      const auto j = static_cast<std::size_t>(uniform01(shuffle) * static_cast<double>(k));
      std::swap(perm[k - 1], perm[std::min(j, k - 1)]);
    }
    for (std::size_t r = 0; r < n; ++r) out.marginals.samples[i].push_back(out.truth[perm[r]].states[i]);
  }
  out.marginals.set_uniform_weights();
  return out;
}

Shape parse_shape(const std::string& name) {
  if (name == "s" || name == "s_curve" || name == "s-shape") return Shape::s_curve;
  if (name == "sigma" || name == "sigma_curve" || name == "sigma-shape") return Shape::sigma_curve;
  throw ParseError("unknown shape '" + name + "' (expected s or sigma)");
}

std::string shape_name(Shape shape) { return shape == Shape::s_curve ? "s" : "sigma"; }

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && s[b] == ' ') ++b;
  return s.substr(b);
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty() || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line) + ": cannot parse number '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<Observation> read_observations(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing header");
  const auto header = split(trim(line));
  if (header.size() < 3 || trim(header[0]) != "subject_id" || trim(header[1]) != "time") {
    throw ParseError("line 1: header must start with subject_id,time,dim_0");
  }
  std::size_t dim = 0;
  while (2 + dim < header.size() && trim(header[2 + dim]) == "dim_" + std::to_string(dim)) ++dim;
  for (std::size_t c = 2 + dim; c < header.size(); ++c) {
    const auto h = trim(header[c]);
    if (h != "marginal_index" && h != "is_forecast") {
      throw ParseError("line 1: unexpected column '" + h + "'");
    }
  }
  if (dim == 0) throw ParseError("line 1: no dim_ columns");
  const std::size_t cols = header.size();

  std::vector<Observation> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != cols) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                       " fields, found " + std::to_string(f.size()) +
                       " (dimension inconsistent with header)");
    }
    Observation o;
    o.subject_id = trim(f[0]);
    if (o.subject_id.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty subject_id");
    o.time = parse_double(trim(f[1]), lineno);
    for (std::size_t k = 0; k < dim; ++k) o.state.push_back(parse_double(trim(f[2 + k]), lineno));
    rows.push_back(std::move(o));
  }
  return rows;
}

std::vector<Observation> read_observations_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_observations(in);
}

std::vector<Trajectory> group_trajectories(const std::vector<Observation>& rows) {
  std::map<std::string, std::vector<const Observation*>> by_subject;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    auto [it, inserted] = by_subject.try_emplace(r.subject_id);
    if (inserted) order.push_back(r.subject_id);
    it->second.push_back(&r);
  }
  std::vector<Trajectory> out;
  for (const auto& id : order) {
    auto obs = by_subject[id];
    std::stable_sort(obs.begin(), obs.end(),
                     [](const Observation* a, const Observation* b) { return a->time < b->time; });
    for (std::size_t i = 1; i < obs.size(); ++i) {
      if (obs[i]->time == obs[i - 1]->time) {
        throw ParseError("subject '" + id + "' has duplicate time " + std::to_string(obs[i]->time));
      }
    }
    if (obs.size() < 2) continue;
    Trajectory tr;
    tr.subject_id = id;
    for (const auto* o : obs) {
      tr.times.push_back(o->time);
      tr.states.push_back(o->state);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

coupling::MarginalSet group_marginals(const std::vector<Observation>& rows) {
  std::map<double, std::vector<Vec>> by_time;
  for (const auto& r : rows) by_time[r.time].push_back(r.state);
  coupling::MarginalSet out;
  for (auto& [t, s] : by_time) {
    out.times.push_back(t);
    out.samples.push_back(std::move(s));
  }
  out.set_uniform_weights();
  return out;
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  return group_trajectories(read_observations_file(path));
}

coupling::MarginalSet load_marginals(const std::string& path) {
  return group_marginals(read_observations_file(path));
}

void write_csv(std::ostream& out, const SyntheticData& data) {
  out << "subject_id,time,dim_0,dim_1,marginal_index\n" << std::setprecision(17);
  for (std::size_t i = 0; i < data.marginals.times.size(); ++i) {
    for (std::size_t r = 0; r < data.marginals.samples[i].size(); ++r) {
      const auto& x = data.marginals.samples[i][r];
      out << data.truth[data.subject_of[i][r]].subject_id << ',' << data.marginals.times[i];
      for (double v : x) out << ',' << v;
      out << ',' << i << '\n';
    }
  }
}

void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& data) {
  const std::size_t d = data.empty() ? 0 : data.front().dim();
  out << "subject_id,time";
  for (std::size_t k = 0; k < d; ++k) out << ",dim_" << k;
  out << '\n' << std::setprecision(17);
  for (const auto& tr : data) {
    for (std::size_t i = 0; i < tr.size(); ++i) {
      out << tr.subject_id << ',' << tr.times[i];
      for (double v : tr.states[i]) out << ',' << v;
      out << '\n';
    }
  }
}

}  // namespace immfm::data
