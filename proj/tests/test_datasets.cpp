// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include "doctest.h"

#include "immfm/datasets.hpp"
#include "immfm/error.hpp"

using namespace immfm;

TEST_CASE("benchmark grid") {
  const data::SyntheticSpec spec;
  const std::vector<double> expected{0, 0.17, 0.29, 0.45, 0.65, 0.71, 0.85, 1};
  CHECK(spec.times == expected);
  const auto d = data::generate(spec);
  CHECK(d.marginals.times == expected);
  CHECK(d.marginals.samples.size() == 8);
  for (const auto& s : d.marginals.samples) CHECK(s.size() == 200);
}

TEST_CASE("zero noise puts every sample on its center") {
  for (auto shape : {data::Shape::s_curve, data::Shape::sigma_curve}) {
    data::SyntheticSpec spec;
    spec.shape = shape;
    spec.noise_std = 0.0;
    spec.n_per_marginal = 20;
    const auto d = data::generate(spec);
    for (std::size_t i = 0; i < 8; ++i)
      for (const auto& x : d.marginals.samples[i]) CHECK(x == d.centers[i]);
  }
}

TEST_CASE("sigma shape crosses itself") {
  const auto c = data::centers(data::Shape::sigma_curve);
  bool found = false;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j)
      if (std::hypot(c[i][0] - c[j][0], c[i][1] - c[j][1]) < 0.05) found = true;
  CHECK(found);
}

TEST_CASE("s shape has curvature of both signs") {
  const auto c = data::centers(data::Shape::s_curve);
  int positive = 0, negative = 0;
  for (std::size_t i = 1; i + 1 < c.size(); ++i) {
    const double ax = c[i][0] - c[i - 1][0], ay = c[i][1] - c[i - 1][1];
    const double bx = c[i + 1][0] - c[i][0], by = c[i + 1][1] - c[i][1];
    const double cross = ax * by - ay * bx;
    (cross > 0 ? positive : negative)++;
  }
  CHECK(positive > 0);
  CHECK(negative > 0);
  for (const auto& p : c) {
    CHECK(std::abs(p[0]) <= 1.0);
    CHECK(std::abs(p[1]) <= 1.0);
  }
}

TEST_CASE("sample means sit near the design centers") {
  for (auto shape : {data::Shape::s_curve, data::Shape::sigma_curve}) {
    data::SyntheticSpec spec;
    spec.shape = shape;
    spec.seed = 3;
    const auto d = data::generate(spec);
    const double bound = 4.0 * spec.noise_std / std::sqrt(double(spec.n_per_marginal));
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t k = 0; k < 2; ++k) {
        double m = 0.0;
        for (const auto& x : d.marginals.samples[i]) m += x[k];
        m /= double(spec.n_per_marginal);
        CHECK(std::abs(m - d.centers[i][k]) < bound);
      }
    }
  }
}

TEST_CASE("generation is reproducible and the pairing is hidden") {
  data::SyntheticSpec spec;
  spec.seed = 11;
  const auto a = data::generate(spec), b = data::generate(spec);
  CHECK(a.marginals.samples == b.marginals.samples);
  CHECK(a.subject_of == b.subject_of);
  CHECK_FALSE(a.subject_of[0] == a.subject_of[1]);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t r = 0; r < 200; ++r)
      CHECK(a.marginals.samples[i][r] == a.truth[a.subject_of[i][r]].states[i]);
}

TEST_CASE("csv round trip") {
  data::SyntheticSpec spec;
  spec.n_per_marginal = 7;
  const auto d = data::generate(spec);
  std::stringstream io;
  data::write_csv(io, d);
  const auto rows = data::read_observations(io);
  CHECK(rows.size() == 56);
  const auto trajectories = data::group_trajectories(rows);
  CHECK(trajectories.size() == 7);
  for (const auto& t : trajectories) {
    const auto id = std::stoul(t.subject_id.substr(1));
    CHECK(t.states == d.truth[id].states);
    CHECK(t.times == d.truth[id].times);
  }
  const auto m = data::group_marginals(rows);
  CHECK(m.times == d.marginals.times);
  CHECK(m.samples == d.marginals.samples);
}

TEST_CASE("ingestion groups, sorts and filters subjects") {
  std::istringstream in(
      "subject_id,time,dim_0\n"
      "b,0.5,2\n"
      "a,1.0,3\n"
      "a,0.0,1\n"
      "c,0.2,9\n"
      "b,0.1,1\n");
  const auto t = data::group_trajectories(data::read_observations(in));
  REQUIRE(t.size() == 2);
  CHECK(t[0].subject_id == "b");
  CHECK(t[0].times == std::vector<double>{0.1, 0.5});
  CHECK(t[1].times == std::vector<double>{0.0, 1.0});
}

TEST_CASE("ingestion errors") {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return data::group_trajectories(data::read_observations(in));
  };
  try {
    parse("subject_id,time,dim_0\na,0,1\na,0.5,oops\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("subject_id,time,dim_0,dim_1\na,0,1,2\na,1,1\n"), SchemaError);
  CHECK_THROWS_AS(parse("subject_id,time,dim_0\na,0,1\na,0,2\n"), ParseError);
  CHECK_THROWS_AS(parse("id,t,x\n"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(data::load_trajectories("/nonexistent/file.csv"), ParseError);
}

TEST_CASE("spec validation") {
  data::SyntheticSpec spec;
  spec.n_per_marginal = 0;
  CHECK_THROWS_AS(spec.validate(), DomainError);
  spec = {};
  spec.noise_std = -1;
  CHECK_THROWS_AS(spec.validate(), DomainError);
  spec = {};
  std::swap(spec.times[2], spec.times[3]);
  CHECK_THROWS_AS(spec.validate(), DomainError);
  CHECK_THROWS_AS(data::parse_shape("zigzag"), ParseError);
}
