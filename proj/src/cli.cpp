// SPDX-License-Identifier: Apache-2.0
#include "immfm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "immfm/checkpoint.hpp"
#include "immfm/coupling.hpp"
#include "immfm/datasets.hpp"
#include "immfm/error.hpp"
#include "immfm/metrics.hpp"
#include "immfm/simulate.hpp"
#include "immfm/svg.hpp"
#include "immfm/train.hpp"

namespace immfm::cli {

namespace {

template <typename F>
int guarded(const char* name, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    std::cerr << "immfm " << name << ": numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const ConvergenceError& e) {
    std::cerr << "immfm " << name << ": solver did not converge (residual " << e.residual()
              << "): " << e.what() << '\n';
    return kNumeric;
  } catch (const ContractError& e) {
    std::cerr << "immfm " << name << ": " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "immfm " << name << ": " << e.what() << '\n';
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "immfm " << name << ": bad JSON: " << e.what() << '\n';
    return kData;
  }
}

std::ofstream open_text(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  return out;
}

std::ifstream open_text_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

simulate::Mode parse_mode(const std::string& s) {
  if (s == "ode") return simulate::Mode::ode;
  if (s == "sde") return simulate::Mode::sde;
  throw ContractError("--mode must be ode or sde");
}

simulate::Variant parse_variant(const std::string& s) {
  if (s == "o") return simulate::Variant::o;
  if (s == "s") return simulate::Variant::s;
  if (s == "su") return simulate::Variant::su;
  throw ContractError("--variant must be o, s or su");
}

simulate::ConditioningUpdate parse_conditioning(const std::string& s) {
  if (s == "per_step") return simulate::ConditioningUpdate::per_step;
  if (s == "per_knot") return simulate::ConditioningUpdate::per_knot;
  throw ContractError("--conditioning must be per_step or per_knot");
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": cannot parse number '" + s + "'");
  }
}

std::vector<Trajectory> group_forecast(const std::vector<ForecastRow>& rows, bool forecast_only) {
  std::vector<Trajectory> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    if (forecast_only && !r.is_forecast) continue;
    auto [it, inserted] = index.try_emplace(r.subject_id, out.size());
    if (inserted) out.push_back(Trajectory{r.subject_id, {}, {}});
    out[it->second].times.push_back(r.time);
    out[it->second].states.push_back(r.state);
  }
  return out;
}

}  // namespace

std::vector<ForecastRow> read_forecast_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  const bool with_id = !header.empty() && header[0] == "subject_id";
  const std::size_t first = with_id ? 1 : 0;
  if (header.size() < first + 3 || header[first] != "time" || header.back() != "is_forecast") {
    throw ParseError("line 1: expected [subject_id,]time,dim_0,...,is_forecast");
  }
  const std::size_t dim = header.size() - first - 2;
  std::vector<ForecastRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " fields");
    }
    ForecastRow r;
    r.subject_id = with_id ? f[0] : "";
    r.time = to_double(f[first], lineno);
    for (std::size_t k = 0; k < dim; ++k) r.state.push_back(to_double(f[first + 1 + k], lineno));
    const auto flag = f.back();
    if (flag != "0" && flag != "1") throw ParseError("line " + std::to_string(lineno) + ": is_forecast must be 0 or 1");
    r.is_forecast = flag == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

int cmd_generate(const GenerateOptions& o) {
  return guarded("generate", [&] {
    data::SyntheticSpec spec;
    spec.shape = data::parse_shape(o.shape);
    spec.n_per_marginal = o.n;
    spec.noise_std = o.noise;
    spec.seed = o.seed;
    const auto d = data::generate(spec);
    auto out = open_text(o.out);
    data::write_csv(out, d);
    return kOk;
  });
}

int cmd_couple(const CoupleOptions& o) {
  return guarded("couple", [&] {
    auto marginals = data::load_marginals(o.data);
    ot::OtOptions opt;
    if (o.solver == "exact") opt.solver = ot::Solver::exact;
    else if (o.solver == "entropic") opt.solver = ot::Solver::entropic;
    else if (o.solver == "auto") opt.solver = ot::Solver::automatic;
    else throw ContractError("--solver must be exact, entropic or auto");
    opt.epsilon = o.eps;
    const auto plan = coupling::couple_marginals(marginals, opt);
    io::save_coupling(o.out, plan);
    return kOk;
  });
}

int cmd_train(const TrainOptions& o) {
  return guarded("train", [&] {
    train::TrainConfig cfg;
    if (!o.config.empty()) {
      auto in = open_text_in(o.config);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError("config '" + o.config + "': " + e.what());
      }
      cfg = train::TrainConfig::from_json(j);
    }
    if (o.seed) cfg.seed = *o.seed;

    train::TrainingData data;
    data.marginals = data::load_marginals(o.data);
    data.marginals.validate();
    if (o.coupling.empty()) {
      data.plan = coupling::couple_marginals(data.marginals);
    } else {
      data.plan = io::load_coupling(o.coupling);
      if (data.plan.sizes() != [&] {
            std::vector<std::size_t> s;
            for (const auto& m : data.marginals.samples) s.push_back(m.size());
            return s;
          }()) {
        throw DimensionError("coupling sizes do not match the data");
      }
      for (std::size_t i = 0; i < data.plan.times.size(); ++i) {
        if (std::abs(data.plan.times[i] - data.marginals.times[i]) > 1e-12) {
          throw DomainError("coupling times do not match the data");
        }
      }
    }

    const auto result = train::train(data, cfg);
    nlohmann::json meta{{"train_config", cfg.to_json()}, {"times", data.marginals.times}};
    io::save_model(o.out_model, result.model, meta);
    if (!o.out_history.empty()) {
      auto out = open_text(o.out_history);
      train::write_history_csv(out, result.history);
    }
    const auto& f = result.final_loss;
    std::cout << std::setprecision(10) << "flow " << f.flow_term << "\nscore " << f.score_term
              << "\nuncertainty " << f.uncertainty_term << "\ntotal " << f.total << "\nlambda_t "
              << f.lambda_t << '\n';
    return kOk;
  });
}

int cmd_forecast(const ForecastOptions& o) {
  return guarded("forecast", [&] {
    if (!(o.dt > 0.0)) throw ContractError("--dt must be positive");
    const auto loaded = io::load_model(o.model);
    auto subjects = data::load_trajectories(o.prefix);
    if (subjects.empty()) throw DomainError("prefix file has no subject with two observations");

    std::vector<double> knots;
    if (loaded.metadata.is_object() && loaded.metadata.contains("times")) {
      knots = loaded.metadata["times"].get<std::vector<double>>();
    }
    std::vector<simulate::ForecastRequest> requests;
    for (auto& tr : subjects) {
      if (o.prefix_length > 0 && tr.size() > o.prefix_length) {
        tr.times.resize(o.prefix_length);
        tr.states.resize(o.prefix_length);
      }
      simulate::ForecastRequest r;
      r.prefix = tr;
      r.t_end = o.t_end;
      r.dt = o.dt;
      r.mode = parse_mode(o.mode);
      r.variant = parse_variant(o.variant);
      r.seed = o.seed;
      r.g_const = o.g_const.value_or(loaded.model.config().sigma0);
      r.conditioning = parse_conditioning(o.conditioning);
      r.knots = knots;
      requests.push_back(std::move(r));
    }
    const auto forecasts = simulate::forecast_many_parallel(loaded.model, requests);

    auto out = open_text(o.out);
    if (forecasts.size() == 1) {
      simulate::write_forecast_csv(out, forecasts.front());
      return kOk;
    }
    const std::size_t d = forecasts.front().trajectory.dim();
    out << "subject_id,time";
    for (std::size_t k = 0; k < d; ++k) out << ",dim_" << k;
    out << ",is_forecast\n" << std::setprecision(17);
    for (std::size_t s = 0; s < forecasts.size(); ++s) {
      const auto& f = forecasts[s];
      for (std::size_t i = 0; i < f.trajectory.size(); ++i) {
        out << subjects[s].subject_id << ',' << f.trajectory.times[i];
        for (double v : f.trajectory.states[i]) out << ',' << v;
        out << ',' << (i >= f.prefix_length ? 1 : 0) << '\n';
      }
    }
    return kOk;
  });
}

int cmd_evaluate(const EvaluateOptions& o) {
  return guarded("evaluate", [&] {
    if (!(o.dt > 0.0)) throw ContractError("--dt must be positive");
    auto in = open_text_in(o.pred);
    const auto rows = read_forecast_csv(in);
    const auto preds = group_forecast(rows, false);
    const auto truth = data::load_trajectories(o.truth);
    std::map<std::string, const Trajectory*> truth_by_id;
    for (const auto& t : truth) truth_by_id[t.subject_id] = &t;

    // Truth times after each subject's prefix, evaluated over all matched subjects.
    std::map<double, std::vector<double>> mse_at;
    std::map<double, std::vector<Vec>> pred_at;
    for (const auto& p : preds) {
      const Trajectory* t = nullptr;
      if (auto it = truth_by_id.find(p.subject_id); it != truth_by_id.end()) t = it->second;
      else if (preds.size() == 1 && truth.size() == 1) t = &truth.front();
      if (t == nullptr) throw DomainError("no truth for subject '" + p.subject_id + "'");
      double prefix_end = -std::numeric_limits<double>::infinity();
      for (const auto& r : rows) {
        if (r.subject_id == p.subject_id && !r.is_forecast) prefix_end = std::max(prefix_end, r.time);
      }
      std::vector<double> at;
      for (double tt : t->times)
        if (tt > prefix_end + 1e-12 && tt <= p.times.back() + 0.5 * o.dt) at.push_back(tt);
      const auto mse = simulate::evaluate_forecast(p, *t, at, 0.5 * o.dt);
      for (std::size_t k = 0; k < at.size(); ++k) {
        mse_at[at[k]].push_back(mse[k]);
        pred_at[at[k]].push_back(p.states[simulate::nearest_index(p, at[k], 0.5 * o.dt)]);
      }
    }
    if (mse_at.empty()) throw DomainError("no truth times fall inside the forecast horizons");

    nlohmann::json per_time = nlohmann::json::array();
    double overall = 0.0;
    std::size_t count = 0;
    for (const auto& [time, values] : mse_at) {
      double mean = 0.0;
      for (double v : values) mean += v;
      overall += mean;
      count += values.size();
      mean /= static_cast<double>(values.size());
      std::vector<Vec> true_marginal;
      for (const auto& tr : truth) {
        const auto idx = simulate::nearest_index(tr, time, 1e-12);
        if (idx != std::numeric_limits<std::size_t>::max()) true_marginal.push_back(tr.states[idx]);
      }
      per_time.push_back({{"time", time},
                          {"mse", mean},
                          {"mse_x10", metrics::mse_times_ten(mean)},
                          {"subjects", values.size()},
                          {"w2", metrics::wasserstein2_empirical(pred_at[time], true_marginal)}});
    }
    nlohmann::json report{{"per_time", per_time},
                          {"mean_mse", overall / static_cast<double>(count)}};
    const std::string text = report.dump(2) + "\n";
    if (o.report.empty()) {
      std::cout << text;
    } else {
      auto out = open_text(o.report);
      out << text;
    }
    return kOk;
  });
}

MmotCheck check_mmot_instance(std::uint64_t seed) {
  Rng rng = make_stream(seed, 0x33);
  coupling::MarginalSet m;
  const std::size_t times = 2 + static_cast<std::size_t>(uniform01(rng) * 2.0);
  const std::size_t dim = 1 + static_cast<std::size_t>(uniform01(rng) * 2.0);
  for (std::size_t i = 0; i < times; ++i) {
    m.times.push_back(static_cast<double>(i) / static_cast<double>(times - 1));
    const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 4.0);
    std::vector<Vec> pts(n, Vec(dim));
    for (auto& p : pts)
      for (auto& x : p) x = uniform(rng, -1.0, 1.0);
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& x : w) total += (x = 0.05 + uniform01(rng));
    for (auto& x : w) x /= total;
    m.samples.push_back(std::move(pts));
    m.weights.push_back(std::move(w));
  }
  m.validate();

  ot::OtOptions exact;
  exact.solver = ot::Solver::exact;
  const auto plan = coupling::couple_marginals(m, exact);
  const auto joint = coupling::composed_joint(plan);
  const auto sizes = plan.sizes();
  MmotCheck out;
  out.times = times;
  for (std::size_t i = 0; i < times; ++i) {
    const auto marg = coupling::joint_marginal(joint, sizes, i);
    for (std::size_t r = 0; r < marg.size(); ++r) {
      out.marginal_residual = std::max(out.marginal_residual, std::abs(marg[r] - m.weights[i][r]));
    }
  }
  const auto brute = coupling::brute_force_mmot(m);
  const double chained = coupling::chained_pairwise_cost(m);
  const auto costs = coupling::path_costs(m);
  double composed = 0.0;
  for (std::size_t k = 0; k < joint.size(); ++k) composed += joint[k] * costs[k];
  out.cost_gap = std::max(std::abs(brute.cost - chained), std::abs(composed - chained));
  return out;
}

int cmd_verify_mmot(const VerifyMmotOptions& o) {
  return guarded("verify-mmot", [&] {
    if (o.seeds == 0) throw ContractError("--seeds must be positive");
    double worst_residual = 0.0, worst_gap = 0.0;
    std::size_t failures = 0;
    for (std::size_t k = 0; k < o.seeds; ++k) {
      const auto c = check_mmot_instance(o.seed + k);
      worst_residual = std::max(worst_residual, c.marginal_residual);
      worst_gap = std::max(worst_gap, c.cost_gap);
      if (c.marginal_residual > kMmotTolerance || c.cost_gap > kMmotTolerance) ++failures;
    }
    std::cout << std::setprecision(3) << std::scientific << "instances " << o.seeds
              << "\nmax_marginal_residual " << worst_residual << "\nmax_cost_gap " << worst_gap
              << "\nfailures " << failures << '\n';
    return failures == 0 ? kOk : kNumeric;
  });
}

int cmd_plot(const PlotOptions& o) {
  return guarded("plot", [&] {
    std::vector<Trajectory> trajectories;
    if (!o.trajectories.empty()) {
      auto in = open_text_in(o.trajectories);
      std::string first;
      std::getline(in, first);
      in.seekg(0);
      if (first.find("is_forecast") != std::string::npos) {
        trajectories = group_forecast(read_forecast_csv(in), false);
      } else {
        trajectories = data::group_trajectories(data::read_observations(in));
      }
    }
    coupling::MarginalSet marginals;
    if (!o.marginals.empty()) marginals = data::load_marginals(o.marginals);
    auto out = open_text(o.out_svg);
    plot::write_svg(out, marginals, trajectories);
    return kOk;
  });
}

int run(int argc, char** argv) {
  CLI::App app{"Interpolative multi-marginal flow matching"};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic benchmark CSV");
  g->add_option("--shape", gen.shape, "s or sigma")->capture_default_str();
  g->add_option("--n", gen.n, "Samples per marginal")->capture_default_str();
  g->add_option("--noise", gen.noise, "Isotropic noise std")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--out", gen.out)->required();

  CoupleOptions cpl;
  auto* c = app.add_subcommand("couple", "Precompute the pairwise transport coupling");
  c->add_option("--data", cpl.data)->required();
  c->add_option("--out", cpl.out)->required();
  c->add_option("--solver", cpl.solver, "exact, entropic or auto")->capture_default_str();
  c->add_option("--eps", cpl.eps, "Entropic regularisation (0: 0.01 x median cost)");

  TrainOptions tr;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train the SDE model");
  t->add_option("--data", tr.data)->required();
  t->add_option("--coupling", tr.coupling);
  t->add_option("--config", tr.config, "JSON training configuration");
  t->add_option("--out-model", tr.out_model)->required();
  t->add_option("--out-history", tr.out_history);
  auto* seed_opt = t->add_option("--seed", train_seed, "Overrides the config seed");

  ForecastOptions fc;
  double g_const = 0.0;
  auto* f = app.add_subcommand("forecast", "Roll the model forward from observed prefixes");
  f->add_option("--model", fc.model)->required();
  f->add_option("--prefix", fc.prefix)->required();
  f->add_option("--prefix-length", fc.prefix_length, "Observations kept per subject (0: all)");
  f->add_option("--t-end", fc.t_end)->capture_default_str();
  f->add_option("--dt", fc.dt)->capture_default_str();
  f->add_option("--mode", fc.mode, "ode or sde")->capture_default_str();
  f->add_option("--variant", fc.variant, "o, s or su")->capture_default_str();
  f->add_option("--seed", fc.seed)->capture_default_str();
  auto* g_opt = f->add_option("--g-const", g_const, "Fixed diffusion for variant s");
  f->add_option("--conditioning", fc.conditioning, "per_step or per_knot")->capture_default_str();
  f->add_option("--out", fc.out)->required();

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Score forecasts against observed trajectories");
  e->add_option("--pred", ev.pred)->required();
  e->add_option("--truth", ev.truth)->required();
  e->add_option("--report", ev.report, "JSON output (stdout when omitted)");
  e->add_option("--dt", ev.dt, "Forecast step; times match within dt/2")->capture_default_str();

  VerifyMmotOptions vm;
  auto* v = app.add_subcommand("verify-mmot", "Check chained couplings against brute-force MMOT");
  v->add_option("--seeds", vm.seeds)->capture_default_str();
  v->add_option("--seed", vm.seed, "First instance seed")->capture_default_str();

  PlotOptions pl;
  auto* p = app.add_subcommand("plot", "Write an SVG of marginals and trajectories");
  p->add_option("--trajectories", pl.trajectories);
  p->add_option("--marginals", pl.marginals);
  p->add_option("--out-svg", pl.out_svg)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  if (*g) return cmd_generate(gen);
  if (*c) return cmd_couple(cpl);
  if (*t) {
    if (*seed_opt) tr.seed = train_seed;
    return cmd_train(tr);
  }
  if (*f) {
    if (*g_opt) fc.g_const = g_const;
    return cmd_forecast(fc);
  }
  if (*e) return cmd_evaluate(ev);
  if (*v) return cmd_verify_mmot(vm);
  if (*p) return cmd_plot(pl);
  return kUsage;
}

}  // namespace immfm::cli
