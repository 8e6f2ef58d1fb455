// SPDX-License-Identifier: Apache-2.0
#include "immfm/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>

#include "immfm/error.hpp"

namespace immfm::io {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ParseError("file is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

void put_doubles(std::ostream& out, std::span<const double> xs) {
  for (double x : xs) put_le(out, std::bit_cast<std::uint64_t>(x));
}

std::vector<double> get_doubles(std::istream& in, std::size_t n) {
  std::vector<double> out(n);
  for (auto& x : out) x = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return out;
}

void write_frame(std::ostream& out, const char (&magic)[6], const nlohmann::json& header) {
  const std::string text = header.dump();
  out.write(magic, sizeof(magic));
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

nlohmann::json read_frame(std::istream& in, const char (&magic)[6], const char* what) {
  char got[6];
  if (!in.read(got, sizeof(got)) || std::memcmp(got, magic, sizeof(got)) != 0) {
    throw ParseError(std::string("not a ") + what + " file (bad magic bytes)");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw ParseError(std::string("unsupported ") + what + " format version " + std::to_string(version));
  }
  const auto len = get_le<std::uint64_t>(in);
  if (len > (std::uint64_t{1} << 30)) throw ParseError("header length is implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ParseError("header is truncated");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed header: ") + e.what());
  }
}

void expect_end(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after data");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

}  // namespace

nlohmann::json model_config_to_json(const model::ModelConfig& c) {
  return {{"state_dim", c.state_dim},
          {"extras_dim", c.extras_dim},
          {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers},
          {"activation", c.activation == model::Activation::tanh ? "tanh" : "relu"},
          {"time_embed_dim", c.time_embed_dim},
          {"max_frequency", c.max_frequency},
          {"g_min", c.g_min},
          {"sigma0", c.sigma0}};
}

model::ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    model::ModelConfig c;
    c.state_dim = j.at("state_dim").get<std::size_t>();
    c.extras_dim = j.at("extras_dim").get<std::size_t>();
    c.hidden_width = j.at("hidden_width").get<std::size_t>();
    c.hidden_layers = j.at("hidden_layers").get<std::size_t>();
    const auto act = j.at("activation").get<std::string>();
    if (act == "tanh") c.activation = model::Activation::tanh;
    else if (act == "relu") c.activation = model::Activation::relu;
    else throw ParseError("unknown activation '" + act + "'");
    c.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
    c.max_frequency = j.at("max_frequency").get<double>();
    c.g_min = j.at("g_min").get<double>();
    c.sigma0 = j.at("sigma0").get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad architecture header: ") + e.what());
  }
}

void save_model(std::ostream& out, const model::SdeModel& m, const nlohmann::json& metadata) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : m.parameters()) {
    params.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}});
  }
  nlohmann::json header{{"architecture", model_config_to_json(m.config())},
                        {"sigma0", m.config().sigma0},
                        {"g_min", m.config().g_min},
                        {"parameters", params}};
  if (!metadata.is_null()) header["metadata"] = metadata;
  write_frame(out, kModelMagic, header);
  for (const auto& p : m.parameters()) put_doubles(out, p.value.data());
  if (!out) throw ParseError("failed writing checkpoint");
}

void save_model(const std::string& path, const model::SdeModel& m, const nlohmann::json& metadata) {
  auto out = open_out(path);
  save_model(out, m, metadata);
}

LoadedModel load_model(std::istream& in) {
  const auto header = read_frame(in, kModelMagic, "checkpoint");
  try {
    const auto config = model_config_from_json(header.at("architecture"));
    std::vector<model::Parameter> params;
    for (const auto& p : header.at("parameters")) {
      const auto rows = p.at("shape").at(0).get<std::size_t>();
      const auto cols = p.at("shape").at(1).get<std::size_t>();
      if (rows == 0 || cols == 0 || rows > (1u << 24) / cols) throw ParseError("bad parameter shape");
      params.push_back({p.at("name").get<std::string>(), Tensor(rows, cols, get_doubles(in, rows * cols))});
    }
    expect_end(in);
    nlohmann::json metadata = header.contains("metadata") ? header["metadata"] : nlohmann::json{};
    try {
      return {model::SdeModel(config, std::move(params)), metadata};
    } catch (const Error& e) {
      throw ParseError(std::string("checkpoint does not match its architecture: ") + e.what());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what());
  }
}

LoadedModel load_model(const std::string& path) {
  auto in = open_in(path);
  return load_model(in);
}

void save_coupling(std::ostream& out, const coupling::CouplingPlan& plan) {
  nlohmann::json header{{"times", plan.times}, {"sizes", plan.sizes()}};
  write_frame(out, kCouplingMagic, header);
  for (const auto& p : plan.plans) put_doubles(out, p.data());
  if (!out) throw ParseError("failed writing coupling");
}

void save_coupling(const std::string& path, const coupling::CouplingPlan& plan) {
  auto out = open_out(path);
  save_coupling(out, plan);
}

coupling::CouplingPlan load_coupling(std::istream& in) {
  const auto header = read_frame(in, kCouplingMagic, "coupling");
  try {
    coupling::CouplingPlan plan;
    plan.times = header.at("times").get<std::vector<double>>();
    const auto sizes = header.at("sizes").get<std::vector<std::size_t>>();
    if (sizes.size() != plan.times.size() || sizes.size() < 2) throw ParseError("sizes do not match times");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      if (sizes[i] == 0 || sizes[i + 1] == 0 || sizes[i] > (1u << 24) / sizes[i + 1]) {
        throw ParseError("bad plan size");
      }
      plan.plans.emplace_back(sizes[i], sizes[i + 1], get_doubles(in, sizes[i] * sizes[i + 1]));
    }
    expect_end(in);
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad coupling header: ") + e.what());
  }
}

coupling::CouplingPlan load_coupling(const std::string& path) {
  auto in = open_in(path);
  return load_coupling(in);
}

}  // namespace immfm::io
