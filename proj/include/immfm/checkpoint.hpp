// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary files: the magic bytes, a little-endian u32 format version, a
// little-endian u64 header length, a JSON header and then raw little-endian
// doubles.

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "immfm/coupling.hpp"
#include "immfm/regressor.hpp"

namespace immfm::io {

inline constexpr char kModelMagic[6] = {'I', 'M', 'M', 'F', 'M', '\0'};
inline constexpr char kCouplingMagic[6] = {'I', 'M', 'M', 'C', 'P', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;

nlohmann::json model_config_to_json(const model::ModelConfig& c);
model::ModelConfig model_config_from_json(const nlohmann::json& j);

/// `metadata` is stored verbatim under the header key "metadata".
void save_model(std::ostream& out, const model::SdeModel& m, const nlohmann::json& metadata = {});
void save_model(const std::string& path, const model::SdeModel& m,
                const nlohmann::json& metadata = {});

struct LoadedModel {
  model::SdeModel model;
  nlohmann::json metadata;
};

/// Throws ParseError on bad magic, version, header or truncated data.
LoadedModel load_model(std::istream& in);
LoadedModel load_model(const std::string& path);

void save_coupling(std::ostream& out, const coupling::CouplingPlan& plan);
void save_coupling(const std::string& path, const coupling::CouplingPlan& plan);
coupling::CouplingPlan load_coupling(std::istream& in);
coupling::CouplingPlan load_coupling(const std::string& path);

}  // namespace immfm::io
