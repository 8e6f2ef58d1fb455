// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <vector>

#include "immfm/coupling.hpp"
#include "immfm/trajectory.hpp"

namespace immfm::plot {

struct SvgOptions {
  int width = 640;
  int height = 640;
  double point_radius = 2.0;
};

/// Scatter of the first two coordinates of every marginal, colored by time,
/// with trajectories drawn as grey polylines on top.
void write_svg(std::ostream& out, const coupling::MarginalSet& marginals,
               const std::vector<Trajectory>& trajectories, const SvgOptions& opt = {});

}  // namespace immfm::plot
