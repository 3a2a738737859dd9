// Experiment runner: every pipeline of the library behind one executable
// with reproducible JSON configs and CSV outputs.
//
// Exit codes: 0 success, 1 internal error, 2 input/validation error,
// 3 solver non-convergence. ENSKIT_OUT_DIR overrides the output directory.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "enskit/common.hpp"
#include "enskit/coordinator.hpp"
#include "enskit/drtools.hpp"
#include "enskit/gridopf.hpp"
#include "enskit/io.hpp"
#include "enskit/lsmdp.hpp"
#include "enskit/markov.hpp"
#include "enskit/synth.hpp"
#include "enskit/time.hpp"
#include "enskit/uncertainty.hpp"
#include "enskit/zlearning.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace enskit;

namespace {

struct RunContext {
  std::string subcommand;
  json config;
  fs::path out_dir;
  std::uint64_t seed = 0;
  std::string prefix;

  fs::path out(const std::string& name) const { return out_dir / (prefix + name); }
};

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
  if (!obj.is_object()) throw input_error(where + ": expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw input_error(where + ": unknown key '" + key + "'");
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open config " + path);
  try {
    json j;
    in >> j;
    if (!j.is_object()) throw input_error("config must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw input_error(std::string("config is not valid JSON: ") + e.what());
  }
}

void apply_overrides(json& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw input_error("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    try {
      cfg[key] = json::parse(value);
    } catch (const json::exception&) {
      cfg[key] = value;  // plain string
    }
  }
}

RunContext make_context(const std::string& subcommand, const std::string& config_path,
                        const std::vector<std::string>& sets, const std::string& out_flag,
                        std::int64_t seed_flag, const std::string& default_prefix) {
  RunContext ctx;
  ctx.subcommand = subcommand;
  ctx.config = load_config(config_path);
  apply_overrides(ctx.config, sets);

  std::string out = ctx.config.value("out_dir", std::string("."));
  if (const char* env = std::getenv("ENSKIT_OUT_DIR"); env && *env) out = env;
  if (!out_flag.empty()) out = out_flag;
  ctx.out_dir = out;
  fs::create_directories(ctx.out_dir);

  if (seed_flag >= 0) ctx.config["seed"] = seed_flag;
  ctx.seed = static_cast<std::uint64_t>(ctx.config.value("seed", std::int64_t{0}));
  ctx.prefix = ctx.config.value("output_prefix", default_prefix);
  return ctx;
}

void write_manifest(const RunContext& ctx, json extra = json::object()) {
  json manifest;
  manifest["subcommand"] = ctx.subcommand;
  manifest["version"] = std::string(version);
  manifest["seed"] = ctx.seed;
  manifest["config"] = ctx.config;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(io::fnv1a64(ctx.config.dump())));
  manifest["config_hash"] = hash;
  for (const auto& [k, v] : extra.items()) manifest[k] = v;
  std::ofstream out(ctx.out("manifest.json"));
  out << manifest.dump(2) << '\n';
}

Eigen::VectorXd json_vector(const json& v, const std::string& where) {
  Eigen::VectorXd out;
  if (v.is_number()) {
    out.resize(1);
    out(0) = v.get<double>();
  } else if (v.is_array()) {
    out.resize(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  } else {
    throw input_error(where + ": expected number or array");
  }
  return out;
}

// --- shared pieces -------------------------------------------------------

markov::Trajectory trajectory_from_config(const json& cfg, std::uint64_t seed) {
  if (cfg.contains("trajectory_csv") == cfg.contains("synthetic"))
    throw input_error("config needs exactly one of trajectory_csv or synthetic");
  if (cfg.contains("trajectory_csv"))
    return io::load_trajectory_csv(cfg["trajectory_csv"].get<std::string>());

  const json& syn = cfg["synthetic"];
  require_keys(syn, {"units", "steps", "dt_s", "spread", "model", "weather"}, "synthetic");
  const json& jm = syn.value("model", json::object());
  require_keys(jm,
               {"thermal_resistance", "thermal_capacitance", "rated_kw", "cop", "setpoint_c",
                "deadband_c", "reactive_factor", "mode"},
               "synthetic.model");
  synth::TclModel model;
  model.thermal_resistance = jm.value("thermal_resistance", model.thermal_resistance);
  model.thermal_capacitance = jm.value("thermal_capacitance", model.thermal_capacitance);
  model.rated_kw = jm.value("rated_kw", model.rated_kw);
  model.cop = jm.value("cop", model.cop);
  model.setpoint_c = jm.value("setpoint_c", model.setpoint_c);
  model.deadband_c = jm.value("deadband_c", model.deadband_c);
  model.reactive_factor = jm.value("reactive_factor", model.reactive_factor);
  const std::string mode = jm.value("mode", std::string("heating"));
  if (mode == "heating")
    model.mode = synth::TclModel::Mode::heating;
  else if (mode == "cooling")
    model.mode = synth::TclModel::Mode::cooling;
  else
    throw input_error("synthetic.model.mode must be heating or cooling");

  const int units = syn.value("units", 100);
  const int steps = syn.value("steps", 5000);
  const double dt_s = syn.value("dt_s", 60.0);
  const double spread = syn.value("spread", 0.10);

  const json& jw = syn.value("weather", json::object());
  require_keys(jw, {"outdoor_c", "outdoor_amplitude_c", "outdoor_period_steps", "solar_kw"},
               "synthetic.weather");
  synth::WeatherSeries weather;
  weather.period_s = dt_s;
  const Eigen::VectorXd base = json_vector(jw.value("outdoor_c", json(5.0)), "weather.outdoor_c");
  weather.outdoor_c.resize(steps);
  const double amp = jw.value("outdoor_amplitude_c", 0.0);
  const double period = jw.value("outdoor_period_steps", 1440.0);
  for (int i = 0; i < steps; ++i) {
    const double b = base.size() == 1 ? base(0) : base(std::min<Eigen::Index>(i, base.size() - 1));
    weather.outdoor_c(i) = b + amp * std::sin(2.0 * M_PI * i / period);
  }
  if (jw.contains("solar_kw")) {
    weather.solar_kw = Eigen::VectorXd::Constant(steps, jw["solar_kw"].get<double>());
  }

  const auto fleet = synth::make_ensemble(model, units, seed, spread);
  synth::SimOptions opts;
  opts.keep_temperatures = false;
  return synth::simulate_ensemble(fleet, weather, steps, dt_s, seed + 1, opts).aggregate;
}

lsmdp::UtilitySchedule utility_from_config(const json& cfg, int horizon, int n) {
  lsmdp::UtilitySchedule sched;
  sched.gamma = cfg.value("gamma", 1.0);
  const json& u = cfg.value("utility", json{{"mode", "zero"}});
  require_keys(u, {"mode", "value", "path"}, "utility");
  const std::string mode = u.value("mode", std::string("zero"));
  if (mode == "zero") {
    sched.reward = Eigen::MatrixXd::Zero(horizon, n);
  } else if (mode == "constant") {
    sched.reward = Eigen::MatrixXd::Constant(horizon, n, u.value("value", 0.0));
  } else if (mode == "csv") {
    if (!u.contains("path")) throw input_error("utility.path required for csv mode");
    std::ifstream in(u["path"].get<std::string>());
    if (!in) throw input_error("cannot open utility csv " + u["path"].get<std::string>());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (io::trim(line).empty()) continue;
      std::vector<double> row;
      for (const auto& c : io::split_csv_line(line)) row.push_back(io::parse_double(io::trim(c), line_no));
      rows.push_back(std::move(row));
    }
    if (static_cast<int>(rows.size()) != horizon)
      throw input_error("utility csv must have one row per step");
    sched.reward.resize(horizon, n);
    for (int t = 0; t < horizon; ++t) {
      if (static_cast<int>(rows[static_cast<std::size_t>(t)].size()) != n)
        throw input_error("utility csv must have one column per state");
      for (int a = 0; a < n; ++a) sched.reward(t, a) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(a)];
    }
  } else {
    throw input_error("utility.mode must be zero, constant or csv");
  }
  return sched;
}

uncertainty::AmbiguitySet ambiguity_from_config(const json& cfg,
                                                const markov::TransitionMatrix& pbar) {
  const json& a = cfg.at("ambiguity");
  require_keys(a, {"sigma_hat", "n_samples", "varsigma", "xi"}, "ambiguity");
  return uncertainty::ambiguity_bounds(pbar.matrix(), a.value("sigma_hat", 0.0),
                                       a.value("n_samples", 2), a.value("varsigma", 0.05),
                                       a.value("xi", 0.05));
}

Eigen::VectorXd rho0_from_config(const json& cfg, int n) {
  const json r = cfg.value("rho0", json("uniform"));
  if (r.is_string() && r.get<std::string>() == "uniform")
    return Eigen::VectorXd::Constant(n, 1.0 / n);
  const Eigen::VectorXd v = json_vector(r, "rho0");
  if (v.size() != n) throw input_error("rho0 length must equal the state count");
  return v;
}

void write_dispatch_csv(const fs::path& path, const lsmdp::DispatchSeries& series) {
  std::ofstream out(path);
  out << "t,p_kw,q_kvar\n";
  for (Eigen::Index t = 0; t < series.p_kw.size(); ++t)
    out << t << ',' << io::format_number(series.p_kw(t)) << ','
        << io::format_number(series.q_kvar(t)) << '\n';
}

// --- subcommands ---------------------------------------------------------

int cmd_mp_build(const RunContext& ctx) {
  require_keys(ctx.config,
               {"trajectory_csv", "synthetic", "n_states", "scheme", "output_prefix", "out_dir",
                "seed"},
               "mp-build");
  const auto traj = trajectory_from_config(ctx.config, ctx.seed);
  const int n_states = ctx.config.value("n_states", 10);
  const std::string scheme_name = ctx.config.value("scheme", std::string("uniform"));
  markov::BinningScheme scheme;
  if (scheme_name == "uniform")
    scheme = markov::BinningScheme::uniform;
  else if (scheme_name == "quantile")
    scheme = markov::BinningScheme::quantile;
  else
    throw input_error("scheme must be uniform or quantile");

  const auto ss = markov::discretize(traj, n_states, scheme);
  const auto matrix = markov::estimate_transitions(traj, ss);
  const auto report = markov::validate(matrix, traj, ss);

  io::save_transition_matrix(matrix, ss, ctx.out("matrix.csv").string(),
                             ctx.out("states.json").string());
  json jrep;
  jrep["samples"] = traj.size();
  jrep["gaps"] = traj.gap_indices.size();
  jrep["stationary_unique"] = report.stationary_unique;
  if (report.tv_distance) jrep["tv_distance"] = *report.tv_distance;
  jrep["occupancy"] = std::vector<double>(report.occupancy.data(),
                                          report.occupancy.data() + report.occupancy.size());
  {
    std::ofstream out(ctx.out("validation.json"));
    out << jrep.dump(2) << '\n';
  }
  write_manifest(ctx);
  return 0;
}

struct SolveBundle {
  markov::TransitionMatrix pbar;
  markov::StateSpace states;
  lsmdp::UtilitySchedule sched;
  lsmdp::Solution solution;
  std::optional<uncertainty::AmbiguitySet> ambiguity;
};

SolveBundle solve_from_config(const json& cfg) {
  const auto pbar = io::load_transition_matrix(cfg.at("matrix_csv").get<std::string>());
  auto states = io::load_state_space(cfg.at("states_json").get<std::string>());
  if (states.size() != pbar.size())
    throw input_error("state space and matrix disagree on the state count");
  const int horizon = cfg.value("horizon", 24);
  if (horizon < 1) throw input_error("horizon must be positive");
  auto sched = utility_from_config(cfg, horizon, pbar.size());

  const std::string variant = cfg.value("variant", std::string("standard"));
  lsmdp::Solution sol;
  std::optional<uncertainty::AmbiguitySet> amb;
  if (variant == "standard") {
    sol = lsmdp::solve_backward(pbar, sched);
  } else if (variant == "stochastic") {
    sol = uncertainty::solve_backward_stochastic({pbar, cfg.value("sigma2", 0.0), {}}, sched);
  } else if (variant == "robust") {
    amb = ambiguity_from_config(cfg, pbar);
    sol = uncertainty::solve_backward_robust(*amb, sched);
  } else {
    throw input_error("variant must be standard, stochastic or robust");
  }
  return {pbar, std::move(states), std::move(sched), std::move(sol), std::move(amb)};
}

int cmd_mdp_solve(const RunContext& ctx) {
  require_keys(ctx.config,
               {"matrix_csv", "states_json", "gamma", "horizon", "utility", "variant", "sigma2",
                "ambiguity", "rho0", "output_prefix", "out_dir", "seed"},
               "mdp-solve");
  auto bundle = solve_from_config(ctx.config);
  const int horizon = bundle.sched.horizon();
  const Eigen::VectorXd rho0 = rho0_from_config(ctx.config, bundle.pbar.size());
  const auto dist = lsmdp::propagate(rho0, bundle.solution.policy);
  const auto series = lsmdp::expected_power(dist, bundle.states);

  for (int t = 0; t < horizon; ++t) {
    char name[48];
    std::snprintf(name, sizeof(name), "policy_t%03d.csv", t);
    io::save_matrix_csv(bundle.solution.policy.step(t).matrix(), ctx.out(name).string());
  }
  write_dispatch_csv(ctx.out("dispatch.csv"), series);
  io::save_matrix_csv(dist.rho, ctx.out("distribution.csv").string());

  // Per-step realized cost of the solved policy under the base utility.
  std::ofstream obj(ctx.out("objective.csv"));
  obj << "t,step_cost,cumulative\n";
  double cum = 0.0;
  for (int t = 0; t < horizon; ++t) {
    lsmdp::Policy one;
    one.steps.push_back(bundle.solution.policy.step(t));
    lsmdp::EnsembleDistribution dslice;
    dslice.rho = dist.rho.middleRows(t, 2);
    lsmdp::UtilitySchedule sslice{bundle.sched.reward.middleRows(t, 1), bundle.sched.gamma};
    const double step_cost = lsmdp::objective_value(one, dslice, bundle.pbar, sslice);
    cum += step_cost;
    obj << t << ',' << io::format_number(step_cost) << ',' << io::format_number(cum) << '\n';
  }
  obj.close();

  json extra{{"gamma", bundle.sched.gamma},
             {"horizon", horizon},
             {"terminal_condition", "unit desirability beyond the horizon"}};
  if (bundle.ambiguity) {
    auto rows = [](const Eigen::MatrixXd& m) {
      json out = json::array();
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(row);
      }
      return out;
    };
    extra["ambiguity_set"] = json{{"zeta_low", bundle.ambiguity->zeta_low},
                                  {"zeta_high", bundle.ambiguity->zeta_high},
                                  {"gamma_low", rows(bundle.ambiguity->gamma_low)},
                                  {"gamma_high", rows(bundle.ambiguity->gamma_high)},
                                  {"varsigma", bundle.ambiguity->varsigma},
                                  {"xi", bundle.ambiguity->xi},
                                  {"sample_count", bundle.ambiguity->sample_count}};
  }
  write_manifest(ctx, extra);
  return 0;
}

int cmd_zlearn(const RunContext& ctx) {
  require_keys(ctx.config,
               {"matrix_csv", "states_json", "gamma", "horizon", "utility", "samples", "c",
                "explore_epsilon", "curve_stride", "reference", "output_prefix", "out_dir",
                "seed"},
               "zlearn");
  const auto pbar = io::load_transition_matrix(ctx.config.at("matrix_csv").get<std::string>());
  const int horizon = ctx.config.value("horizon", 24);
  auto sched = utility_from_config(ctx.config, horizon, pbar.size());
  const auto samples_total = ctx.config.value("samples", std::int64_t{100000});
  const double c = ctx.config.value("c", 2.0);
  const double explore = ctx.config.value("explore_epsilon", 0.0);
  const std::int64_t stride = ctx.config.value("curve_stride", std::int64_t{1000});
  const bool want_reference = ctx.config.value("reference", true);

  std::optional<lsmdp::Desirability> reference;
  if (want_reference) reference = lsmdp::solve_backward_kernel(pbar.matrix(), sched);

  zlearning::LearningSchedule lsched;
  lsched.c = c;
  zlearning::ZLearner learner(sched, lsched);
  const auto samples =
      zlearning::make_passive_samples(pbar, horizon, samples_total, ctx.seed, explore);

  std::ofstream curve(ctx.out("curve.csv"));
  curve << "samples,max_rel_error\n";
  auto emit = [&](std::int64_t k) {
    curve << k << ',';
    if (reference) {
      double worst = 0.0;
      for (int t = 0; t < horizon; ++t) {
        const Eigen::VectorXd z = reference->z(t);
        for (int b = 0; b < pbar.size(); ++b)
          worst = std::max(worst, std::fabs(learner.z_hat()(t, b) - z(b)) / z(b));
      }
      curve << io::format_number(worst);
    }
    curve << '\n';
  };
  for (std::int64_t k = 0; k < samples_total; ++k) {
    learner.update(samples[static_cast<std::size_t>(k)]);
    if ((k + 1) % stride == 0 || k + 1 == samples_total) emit(k + 1);
  }
  curve.close();
  io::save_matrix_csv(learner.z_hat(), ctx.out("zhat.csv").string());
  write_manifest(ctx, json{{"rejected_samples", learner.rejected()}});
  return 0;
}

int cmd_cosim(const RunContext& ctx) {
  require_keys(ctx.config,
               {"network_json", "horizon", "ensembles", "lambda_tariff", "delta", "delta_decay",
                "max_iterations", "tolerance", "variant", "epsilon", "sigma_kw", "output_prefix",
                "out_dir", "seed"},
               "cosim");
  auto parts = io::load_network_parts(ctx.config.at("network_json").get<std::string>());
  const int horizon = ctx.config.value("horizon", 24);

  std::vector<coordinator::EnsembleSpec> specs;
  for (const auto& je : ctx.config.at("ensembles")) {
    require_keys(je,
                 {"bus", "matrix_csv", "states_json", "gamma", "rho0", "utility", "sigma2",
                  "ambiguity"},
                 "ensembles[]");
    coordinator::EnsembleSpec spec{
        je.at("bus").get<std::string>(),
        io::load_transition_matrix(je.at("matrix_csv").get<std::string>()),
        io::load_state_space(je.at("states_json").get<std::string>()),
        {},
        je.value("gamma", 1.0),
        {},
        je.value("sigma2", 0.0),
        {}};
    const int n = spec.states.size();
    spec.base_reward = utility_from_config(je, horizon, n).reward;
    spec.rho0 = rho0_from_config(je, n);
    if (je.contains("ambiguity")) spec.ambiguity = ambiguity_from_config(je, spec.default_matrix);

    // Expose the full dispatch range to the network side when the input
    // network does not already do so.
    for (auto& bus : parts.buses) {
      if (bus.id != spec.bus) continue;
      if (!bus.flex) {
        gridopf::FlexRange f;
        f.p_min_kw = spec.states.dispatch_min_kw();
        f.p_max_kw = spec.states.dispatch_max_kw();
        const Eigen::VectorXd q = spec.states.rated_reactive();
        f.q_min_kvar = q.minCoeff();
        f.q_max_kvar = q.maxCoeff();
        bus.flex = f;
      }
    }
    specs.push_back(std::move(spec));
  }

  const std::string variant = ctx.config.value("variant", std::string("standard"));
  coordinator::PolicyVariant pv;
  if (variant == "standard")
    pv = coordinator::PolicyVariant::standard;
  else if (variant == "stochastic")
    pv = coordinator::PolicyVariant::stochastic;
  else if (variant == "robust")
    pv = coordinator::PolicyVariant::robust;
  else
    throw input_error("variant must be standard, stochastic or robust");

  gridopf::UncertainInjection unc;
  unc.epsilon = ctx.config.value("epsilon", 0.05);
  const Eigen::VectorXd sigma =
      json_vector(ctx.config.value("sigma_kw", json(0.0)), "sigma_kw");
  const auto n_bus = static_cast<Eigen::Index>(parts.buses.size());
  if (sigma.size() == 1) {
    unc.sigma_kw = Eigen::MatrixXd::Constant(n_bus, 1, sigma(0));
  } else if (sigma.size() == n_bus) {
    unc.sigma_kw = sigma;
  } else {
    throw input_error("sigma_kw length must match the bus count");
  }

  coordinator::CoSimConfig cfg{
      parts.build(),
      std::move(specs),
      unc,
      json_vector(ctx.config.value("lambda_tariff", json(0.0)), "lambda_tariff"),
      horizon,
      ctx.config.value("delta", 0.01),
      ctx.config.value("delta_decay", false),
      ctx.config.value("max_iterations", 500),
      ctx.config.value("tolerance", 1e-4),
      pv};
  const auto report = coordinator::run(cfg);

  std::ofstream trace(ctx.out("trace.csv"));
  trace << "nu,dual_norm,primal_residual,mdp_objective,opf_objective,dual_objective\n";
  for (const auto& s : report.trace)
    trace << s.nu << ',' << io::format_number(s.lambda_change) << ','
          << io::format_number(s.primal_residual) << ',' << io::format_number(s.mdp_objective)
          << ',' << io::format_number(s.opf_objective) << ','
          << io::format_number(s.dual_objective) << '\n';
  trace.close();

  for (std::size_t i = 0; i < cfg.ensembles.size(); ++i) {
    const auto& spec = cfg.ensembles[i];
    const auto series =
        lsmdp::expected_power(report.buses[i].distribution, spec.states);
    write_dispatch_csv(ctx.out("dispatch_" + spec.bus + ".csv"), series);
  }
  io::save_matrix_csv(report.dual.lambda_p, ctx.out("multipliers_p.csv").string());
  io::save_matrix_csv(report.dual.lambda_q, ctx.out("multipliers_q.csv").string());
  io::save_matrix_csv(report.p_mdp, ctx.out("schedule_mdp.csv").string());
  io::save_matrix_csv(report.p_opf, ctx.out("schedule_opf.csv").string());

  write_manifest(ctx, json{{"converged", report.converged},
                           {"iterations", report.iterations}});
  return report.converged ? 0 : 3;
}

int cmd_dr_report(const RunContext& ctx) {
  require_keys(ctx.config,
               {"trajectory_csv", "events_json", "holidays", "ranking", "low_usage_window",
                "low_usage_fraction", "output_prefix", "out_dir", "seed"},
               "dr-report");
  const auto traj = io::load_trajectory_csv(ctx.config.at("trajectory_csv").get<std::string>());

  drtools::CalendarRules rules;
  for (const auto& h : ctx.config.value("holidays", json::array()))
    rules.holidays.push_back(time_util::parse_iso8601(h.get<std::string>()));
  rules.low_usage_window = ctx.config.value("low_usage_window", 30);
  rules.low_usage_fraction = ctx.config.value("low_usage_fraction", 0.25);
  const std::string ranking = ctx.config.value("ranking", std::string("event_window"));
  if (ranking == "event_window")
    rules.ranking = drtools::CalendarRules::Ranking::event_window;
  else if (ranking == "daily_total")
    rules.ranking = drtools::CalendarRules::Ranking::daily_total;
  else
    throw input_error("ranking must be event_window or daily_total");

  std::ifstream ev(ctx.config.at("events_json").get<std::string>());
  if (!ev) throw input_error("cannot open events file");
  json jevents;
  try {
    ev >> jevents;
  } catch (const json::exception& e) {
    throw input_error(std::string("events file is not valid JSON: ") + e.what());
  }

  std::vector<drtools::DrEvent> events;
  for (const auto& je : jevents) {
    require_keys(je, {"date", "start_hour", "end_hour", "enrolled_kw"}, "events[]");
    drtools::DrEvent e;
    e.day = time_util::day_stamp(time_util::parse_iso8601(je.at("date").get<std::string>()));
    e.start_hour = je.value("start_hour", 0);
    e.end_hour = je.value("end_hour", 0);
    e.enrolled_kw = je.value("enrolled_kw", 0.0);
    events.push_back(e);
  }
  for (const auto& e : events) rules.event_days.push_back(e.day);

  std::ofstream base_csv(ctx.out("baseline.csv"));
  base_csv << "event_date,hour,baseline_kw\n";
  std::ofstream metrics_csv(ctx.out("metrics.csv"));
  metrics_csv << "event_date,hour,baseline_kw,realtime_kw,baseline_error_pct,in_event\n";
  std::ofstream curt_csv(ctx.out("curtailment.csv"));
  curt_csv << "event_date,delivered_kw,enrolled_kw,curtailment_error_pct\n";

  for (const auto& event : events) {
    const auto base = drtools::baseline(traj, event, rules);
    for (int h = 0; h < 24; ++h)
      base_csv << time_util::format_date(event.day) << ',' << h << ','
               << io::format_number(base.baseline_kw[static_cast<std::size_t>(h)]) << '\n';
    const auto metrics = drtools::error_metrics(base, traj, event);
    for (const auto& hm : metrics.hours) {
      metrics_csv << time_util::format_date(event.day) << ',' << hm.hour << ','
                  << io::format_number(hm.baseline_kw) << ',' << io::format_number(hm.realtime_kw)
                  << ',';
      if (hm.baseline_error_pct) metrics_csv << io::format_number(*hm.baseline_error_pct);
      metrics_csv << ',' << (hm.in_event_window ? 1 : 0) << '\n';
    }
    curt_csv << time_util::format_date(event.day) << ',' << io::format_number(metrics.delivered_kw)
             << ',' << io::format_number(event.enrolled_kw) << ',';
    if (metrics.curtailment_error_pct) curt_csv << io::format_number(*metrics.curtailment_error_pct);
    curt_csv << '\n';
  }
  write_manifest(ctx);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov-ensemble dispatch toolkit"};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::string out_dir;
    std::int64_t seed = -1;
    std::vector<std::string> sets;
  };

  std::map<std::string, Args> args;
  std::map<std::string, std::string> prefixes{{"mp-build", "mp_"},
                                              {"mdp-solve", "mdp_"},
                                              {"zlearn", "zl_"},
                                              {"cosim", "cosim_"},
                                              {"dr-report", "dr_"}};
  std::map<std::string, std::string> descriptions{
      {"mp-build", "Estimate a transition matrix from consumption data"},
      {"mdp-solve", "Solve the dispatch MDP (standard/stochastic/robust)"},
      {"zlearn", "Model-free desirability estimation from passive samples"},
      {"cosim", "Dual-decomposition co-optimization with the network"},
      {"dr-report", "Baseline and curtailment error report"}};
  for (const auto& [name, desc] : descriptions) {
    auto* sub = app.add_subcommand(name, desc);
    auto& a = args[name];
    sub->add_option("--config", a.config, "JSON config file")->required();
    sub->add_option("--out-dir", a.out_dir, "output directory (overrides config and env)");
    sub->add_option("--seed", a.seed, "seed override");
    sub->add_option("--set", a.sets, "override a top-level config key, key=value");
  }

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const auto& a = args[name];
    const RunContext ctx = make_context(name, a.config, a.sets, a.out_dir, a.seed, prefixes[name]);
    if (name == "mp-build") return cmd_mp_build(ctx);
    if (name == "mdp-solve") return cmd_mdp_solve(ctx);
    if (name == "zlearn") return cmd_zlearn(ctx);
    if (name == "cosim") return cmd_cosim(ctx);
    if (name == "dr-report") return cmd_dr_report(ctx);
    std::cerr << "unknown subcommand\n";
    return 1;
  } catch (const input_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const convergence_error& e) {
    std::cerr << "solver did not converge: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
