// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace immfm {

using Vec = std::vector<double>;

/// Ordered (time, state) observations of one subject.
struct Trajectory {
  std::string subject_id;
  std::vector<double> times;
  std::vector<Vec> states;

  std::size_t size() const noexcept { return times.size(); }
  std::size_t dim() const noexcept { return states.empty() ? 0 : states.front().size(); }

  /// Throws DomainError unless times strictly increase and every state has the same dimension.
  void validate() const;
};

}  // namespace immfm
