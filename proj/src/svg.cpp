// SPDX-License-Identifier: Apache-2.0
#include "immfm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "immfm/error.hpp"

namespace immfm::plot {

namespace {

// Viridis-like ramp, interpolated linearly.
const double kRamp[5][3] = {
    {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};

std::string color(double u) {
  u = std::clamp(u, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(u));
  const double f = u - i;
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                static_cast<int>(std::lround(kRamp[i][0] + f * (kRamp[i + 1][0] - kRamp[i][0]))),
                static_cast<int>(std::lround(kRamp[i][1] + f * (kRamp[i + 1][1] - kRamp[i][1]))),
                static_cast<int>(std::lround(kRamp[i][2] + f * (kRamp[i + 1][2] - kRamp[i][2]))));
  return buf;
}

}  // namespace

void write_svg(std::ostream& out, const coupling::MarginalSet& marginals,
               const std::vector<Trajectory>& trajectories, const SvgOptions& opt) {
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x;
  double lo_y = lo_x, hi_y = -lo_x;
  auto extend = [&](const Vec& p) {
    if (p.size() < 2) throw DimensionError("plotting needs at least two coordinates");
    lo_x = std::min(lo_x, p[0]);
    hi_x = std::max(hi_x, p[0]);
    lo_y = std::min(lo_y, p[1]);
    hi_y = std::max(hi_y, p[1]);
  };
  for (const auto& s : marginals.samples)
    for (const auto& p : s) extend(p);
  for (const auto& tr : trajectories)
    for (const auto& p : tr.states) extend(p);
  if (!std::isfinite(lo_x)) throw DomainError("nothing to plot");

  const double pad = 24.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  const double scale = (std::min(opt.width, opt.height) - 2 * pad) / span;
  auto px = [&](double x) { return pad + (x - lo_x) * scale; };
  auto py = [&](double y) { return opt.height - pad - (y - lo_y) * scale; };

  char buf[96];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double t0 = marginals.times.empty() ? 0.0 : marginals.times.front();
  const double t1 = marginals.times.empty() ? 1.0 : marginals.times.back();
  for (std::size_t i = 0; i < marginals.samples.size(); ++i) {
    const double u = t1 > t0 ? (marginals.times[i] - t0) / (t1 - t0) : 0.0;
    out << "<g fill=\"" << color(u) << "\" fill-opacity=\"0.7\">\n";
    for (const auto& p : marginals.samples[i]) {
      std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\"/>\n", px(p[0]),
                    py(p[1]), opt.point_radius);
      out << buf;
    }
    out << "</g>\n";
  }
  out << "<g fill=\"none\" stroke=\"#808080\" stroke-opacity=\"0.6\" stroke-width=\"1\">\n";
  for (const auto& tr : trajectories) {
    out << "<polyline points=\"";
    for (std::size_t k = 0; k < tr.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", k ? " " : "", px(tr.states[k][0]),
                    py(tr.states[k][1]));
      out << buf;
    }
    out << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
}

}  // namespace immfm::plot
