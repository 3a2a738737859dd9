#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <future>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "enskit/common.hpp"
#include "enskit/gridopf.hpp"
#include "enskit/lsmdp.hpp"
#include "enskit/markov.hpp"
#include "enskit/uncertainty.hpp"

// Dual decomposition of the integrated ensemble-dispatch / network-dispatch
// problem. Each iteration solves the per-bus MDPs with multiplier-shifted
// utilities (step 1), the per-slice network dispatch priced by the same
// multipliers (step 2), and then moves the multipliers along the mismatch
// between the two schedules (step 3) until they stop changing.
//
// Utilities are rewards, so the price shift enters with a minus sign: a
// positive lambda_p lowers the effective reward of high-power states, which
// is what pushes the ensemble toward the network's schedule.
//
// Time alignment: multiplier slice t prices the distribution reached by MDP
// step t (rho_{t+1}) against the network solve for slice t; the initial
// distribution is data, not a decision, so it is never priced.

namespace enskit::coordinator {

enum class PolicyVariant { standard, stochastic, robust };

struct EnsembleSpec {
  std::string bus;
  markov::TransitionMatrix default_matrix;
  markov::StateSpace states;
  Eigen::MatrixXd base_reward;  // (T x n)
  double gamma = 1.0;
  Eigen::VectorXd rho0;
  double sigma2 = 0.0;                                 // stochastic variant
  std::optional<uncertainty::AmbiguitySet> ambiguity;  // robust variant
};

struct CoSimConfig {
  gridopf::RadialNetwork network;
  std::vector<EnsembleSpec> ensembles;
  gridopf::UncertainInjection injection_uncertainty;
  Eigen::VectorXd loss_tariff;  // per slice (size T, or 1 = constant)
  int horizon = 0;
  double step_size = 0.01;  // dual step delta
  bool step_decay = false;  // delta / nu instead of constant delta
  int max_iterations = 500;
  // Convergence is declared when the max-norm multiplier change is at most
  // `tolerance` AND the schedules agree to within 10x that, so a tiny step
  // size cannot fake convergence while the schedules still disagree.
  double tolerance = 1e-4;
  PolicyVariant variant = PolicyVariant::standard;

  double tariff(int t) const {
    if (loss_tariff.size() == 1) return loss_tariff(0);
    return loss_tariff(t);
  }

  void validate() const {
    if (horizon < 1) throw input_error("CoSimConfig: horizon must be positive");
    if (ensembles.empty()) throw input_error("CoSimConfig: no ensembles");
    if (step_size < 0.0) throw input_error("CoSimConfig: step size must be nonnegative");
    if (max_iterations < 1) throw input_error("CoSimConfig: need at least one iteration");
    if (tolerance <= 0.0) throw input_error("CoSimConfig: tolerance must be positive");
    if (loss_tariff.size() != 1 && loss_tariff.size() != horizon)
      throw input_error("CoSimConfig: loss tariff length mismatch");
    if ((loss_tariff.array() < 0.0).any())
      throw input_error("CoSimConfig: loss tariff must be nonnegative");
    for (const auto& e : ensembles) {
      network.bus_index(e.bus);  // throws for unknown ids
      if (e.base_reward.rows() != horizon || e.base_reward.cols() != e.states.size())
        throw input_error("CoSimConfig: base reward shape mismatch for bus " + e.bus);
      if (e.default_matrix.size() != e.states.size())
        throw input_error("CoSimConfig: matrix / state space mismatch for bus " + e.bus);
      if (e.gamma <= 0.0) throw input_error("CoSimConfig: gamma must be positive for bus " + e.bus);
      if (e.rho0.size() != e.states.size())
        throw input_error("CoSimConfig: rho0 size mismatch for bus " + e.bus);
      if (e.sigma2 < 0.0) throw input_error("CoSimConfig: sigma2 must be nonnegative");
      // The network must expose the ensemble's whole dispatch range, or the
      // two schedules cannot meet.
      const auto& flex = network.bus(network.bus_index(e.bus)).flex;
      if (!flex)
        throw input_error("CoSimConfig: bus " + e.bus + " has no controllable range");
      if (flex->p_min_kw > e.states.dispatch_min_kw() + 1e-9 ||
          flex->p_max_kw < e.states.dispatch_max_kw() - 1e-9)
        throw input_error("CoSimConfig: controllable range at bus " + e.bus +
                          " does not cover the ensemble dispatch range");
    }
  }
};

struct DualState {
  Eigen::MatrixXd lambda_p;  // (T x n_bus), zero outside ensemble buses
  Eigen::MatrixXd lambda_q;
  int iteration = 0;

  static DualState zeros(int horizon, int n_buses) {
    DualState d;
    d.lambda_p = Eigen::MatrixXd::Zero(horizon, n_buses);
    d.lambda_q = Eigen::MatrixXd::Zero(horizon, n_buses);
    d.iteration = 1;
    return d;
  }
};

struct BusSolution {
  lsmdp::Solution solution;
  lsmdp::EnsembleDistribution distribution;
  Eigen::VectorXd p_kw;   // implied consumption per slice (size T)
  Eigen::VectorXd q_kvar;
  double subproblem_value = 0.0;  // shifted-utility optimum, for the dual trace
};

struct IterationStats {
  int nu = 0;
  double lambda_change = 0.0;
  double primal_residual = 0.0;
  double mdp_objective = 0.0;
  double opf_objective = 0.0;
  double dual_objective = 0.0;
};

struct RunReport {
  bool converged = false;
  int iterations = 0;
  DualState dual;
  std::vector<BusSolution> buses;
  std::vector<gridopf::OpfDecision> opf;  // one per slice
  std::vector<IterationStats> trace;
  Eigen::MatrixXd p_mdp, p_opf;  // (T x n_bus) final schedules
};

namespace detail {

inline BusSolution solve_bus(const CoSimConfig& cfg, const EnsembleSpec& spec,
                             const DualState& dual) {
  const int b = cfg.network.bus_index(spec.bus);
  const int n = spec.states.size();
  const Eigen::VectorXd p_rated = spec.states.rated_power();
  const Eigen::VectorXd q_rated = spec.states.rated_reactive();

  lsmdp::UtilitySchedule shifted;
  shifted.gamma = spec.gamma;
  shifted.reward = spec.base_reward;
  for (int t = 0; t < cfg.horizon; ++t)
    for (int a = 0; a < n; ++a)
      shifted.reward(t, a) -= dual.lambda_p(t, b) * p_rated(a) + dual.lambda_q(t, b) * q_rated(a);

  BusSolution out;
  switch (cfg.variant) {
    case PolicyVariant::standard:
      out.solution = lsmdp::solve_backward(spec.default_matrix, shifted);
      break;
    case PolicyVariant::stochastic:
      out.solution = uncertainty::solve_backward_stochastic({spec.default_matrix, spec.sigma2, {}},
                                                            shifted);
      break;
    case PolicyVariant::robust:
      if (!spec.ambiguity)
        throw input_error("CoSimConfig: robust variant needs an ambiguity set for bus " +
                          spec.bus);
      out.solution = uncertainty::solve_backward_robust(*spec.ambiguity, shifted);
      break;
  }
  out.distribution = lsmdp::propagate(spec.rho0, out.solution.policy);
  out.p_kw.resize(cfg.horizon);
  out.q_kvar.resize(cfg.horizon);
  for (int t = 0; t < cfg.horizon; ++t) {
    out.p_kw(t) = out.distribution.rho.row(t + 1).dot(p_rated);
    out.q_kvar(t) = out.distribution.rho.row(t + 1).dot(q_rated);
  }
  out.subproblem_value = lsmdp::objective_value(out.solution.policy, out.distribution,
                                                spec.default_matrix, shifted);
  return out;
}

}  // namespace detail

// Step 1: per-bus MDP solves against the current multipliers. Buses are
// independent and solved concurrently.
inline std::vector<BusSolution> mdp_step(const CoSimConfig& cfg, const DualState& dual) {
  std::vector<std::future<BusSolution>> futures;
  futures.reserve(cfg.ensembles.size());
  for (const auto& spec : cfg.ensembles)
    futures.push_back(std::async(std::launch::async,
                                 [&cfg, &spec, &dual] { return detail::solve_bus(cfg, spec, dual); }));
  std::vector<BusSolution> out;
  out.reserve(futures.size());
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

// Step 2: per-slice network solves, warm-started at the ensembles' own
// proposal so that directions the objective does not care about stay at the
// consensus point.
inline std::vector<gridopf::OpfDecision> opf_step(const CoSimConfig& cfg, const DualState& dual,
                                                  const Eigen::MatrixXd& p_mdp,
                                                  const Eigen::MatrixXd& q_mdp) {
  std::vector<std::future<gridopf::OpfDecision>> futures;
  futures.reserve(static_cast<std::size_t>(cfg.horizon));
  for (int t = 0; t < cfg.horizon; ++t) {
    futures.push_back(std::async(std::launch::async, [&cfg, &dual, &p_mdp, &q_mdp, t] {
      const Eigen::VectorXd lp = dual.lambda_p.row(t);
      const Eigen::VectorXd lq = dual.lambda_q.row(t);
      const std::pair<Eigen::VectorXd, Eigen::VectorXd> warm{p_mdp.row(t), q_mdp.row(t)};
      try {
        return gridopf::solve_ccopf(cfg.network, cfg.injection_uncertainty, lp, lq, t,
                                    cfg.tariff(t), warm);
      } catch (const input_error& e) {
        throw input_error("network solve at slice " + std::to_string(t) + ": " + e.what());
      }
    }));
  }
  std::vector<gridopf::OpfDecision> out;
  out.reserve(futures.size());
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

// Step 3: subgradient move of the multipliers along the schedule mismatch,
// applied symmetrically to the active and reactive parts.
inline DualState dual_update(const DualState& dual, const CoSimConfig& cfg,
                             const Eigen::MatrixXd& p_mdp, const Eigen::MatrixXd& q_mdp,
                             const Eigen::MatrixXd& p_opf, const Eigen::MatrixXd& q_opf,
                             double delta) {
  DualState next = dual;
  next.iteration = dual.iteration + 1;
  for (const auto& spec : cfg.ensembles) {
    const int b = cfg.network.bus_index(spec.bus);
    for (int t = 0; t < cfg.horizon; ++t) {
      next.lambda_p(t, b) += delta * (p_mdp(t, b) - p_opf(t, b));
      next.lambda_q(t, b) += delta * (q_mdp(t, b) - q_opf(t, b));
    }
  }
  return next;
}

// Fig-8-style loop: steps 1 -> 2 -> 3 until the multipliers stop moving.
// Network infeasibility at any iteration is annotated with the iteration
// index and rethrown.
inline RunReport run(const CoSimConfig& cfg) {
  cfg.validate();
  const int nb = cfg.network.n_buses();
  DualState dual = DualState::zeros(cfg.horizon, nb);
  RunReport rep;

  for (int nu = 1; nu <= cfg.max_iterations; ++nu) {
    std::vector<BusSolution> buses;
    std::vector<gridopf::OpfDecision> opf;
    Eigen::MatrixXd p_mdp = Eigen::MatrixXd::Zero(cfg.horizon, nb);
    Eigen::MatrixXd q_mdp = Eigen::MatrixXd::Zero(cfg.horizon, nb);

    buses = mdp_step(cfg, dual);
    for (std::size_t i = 0; i < buses.size(); ++i) {
      const int b = cfg.network.bus_index(cfg.ensembles[i].bus);
      p_mdp.col(b) = buses[i].p_kw;
      q_mdp.col(b) = buses[i].q_kvar;
    }
    try {
      opf = opf_step(cfg, dual, p_mdp, q_mdp);
    } catch (const input_error& e) {
      throw input_error("iteration " + std::to_string(nu) + ": " + e.what());
    }
    Eigen::MatrixXd p_opf = Eigen::MatrixXd::Zero(cfg.horizon, nb);
    Eigen::MatrixXd q_opf = Eigen::MatrixXd::Zero(cfg.horizon, nb);
    double opf_objective = 0.0;
    for (int t = 0; t < cfg.horizon; ++t) {
      p_opf.row(t) = opf[static_cast<std::size_t>(t)].p_kw;
      q_opf.row(t) = opf[static_cast<std::size_t>(t)].q_kvar;
      opf_objective += opf[static_cast<std::size_t>(t)].objective;
    }

    double residual = 0.0;
    double mdp_objective = 0.0;
    for (const auto& bus : buses) mdp_objective += bus.subproblem_value;
    for (const auto& spec : cfg.ensembles) {
      const int b = cfg.network.bus_index(spec.bus);
      for (int t = 0; t < cfg.horizon; ++t) {
        residual = std::max(residual, std::fabs(p_mdp(t, b) - p_opf(t, b)));
        residual = std::max(residual, std::fabs(q_mdp(t, b) - q_opf(t, b)));
      }
    }

    const double delta_nu = cfg.step_decay ? cfg.step_size / nu : cfg.step_size;
    const DualState next = dual_update(dual, cfg, p_mdp, q_mdp, p_opf, q_opf, delta_nu);
    const double change =
        std::max((next.lambda_p - dual.lambda_p).lpNorm<Eigen::Infinity>(),
                 (next.lambda_q - dual.lambda_q).lpNorm<Eigen::Infinity>());

    rep.trace.push_back({nu, change, residual, mdp_objective, opf_objective,
                         mdp_objective + opf_objective});
    rep.buses = std::move(buses);
    rep.opf = std::move(opf);
    rep.p_mdp = std::move(p_mdp);
    rep.p_opf = std::move(p_opf);
    rep.iterations = nu;
    dual = next;
    if (change <= cfg.tolerance && residual <= 10.0 * cfg.tolerance) {
      rep.converged = true;
      break;
    }
  }
  rep.dual = dual;
  return rep;
}

}  // namespace enskit::coordinator
