#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "enskit/common.hpp"
#include "enskit/markov.hpp"

// Linearly-solvable MDP over a default transition matrix: the control cost
// is the KL divergence of the chosen transition law from the default one,
// which makes the Bellman recursion linear in the desirability
// z = exp(-phi / gamma) and gives the optimal policy in closed form as a
// z-weighted renormalization of the default columns.
//
// Time indexing: a horizon of T steps has transitions t = 0..T-1. The
// utility reward(t, a) is collected when step t lands in state a, and
// row t of the desirability weighs the state reached by step t; row T is
// the all-ones terminal row (zero terminal cost). Distributions carry T+1
// rows, rho.row(0) being the initial condition.

namespace enskit::lsmdp {

struct UtilitySchedule {
  Eigen::MatrixXd reward;  // (T x n), stored as a reward: higher is better
  double gamma = 1.0;      // KL penalty weight, > 0

  int horizon() const { return static_cast<int>(reward.rows()); }
  int states() const { return static_cast<int>(reward.cols()); }

  void validate() const {
    if (gamma <= 0.0) throw input_error("UtilitySchedule: gamma must be positive");
    if (!reward.allFinite()) throw input_error("UtilitySchedule: rewards must be finite");
    if (reward.rows() < 1 || reward.cols() < 1)
      throw input_error("UtilitySchedule: empty schedule");
  }
};

class Desirability {
 public:
  Desirability() = default;  // empty placeholder; filled by the solvers

  Desirability(Eigen::MatrixXd log_z, double gamma)
      : log_z_(std::move(log_z)), gamma_(gamma) {
    if (!log_z_.allFinite())
      throw input_error("Desirability: z must be strictly positive and finite");
  }

  int horizon() const { return static_cast<int>(log_z_.rows()) - 1; }
  int states() const { return static_cast<int>(log_z_.cols()); }
  double gamma() const { return gamma_; }

  const Eigen::MatrixXd& log_z() const { return log_z_; }
  Eigen::VectorXd z(int t) const { return log_z_.row(t).array().exp(); }
  // Value function phi = -gamma log z.
  Eigen::VectorXd phi(int t) const { return -gamma_ * log_z_.row(t); }

 private:
  Eigen::MatrixXd log_z_;  // (T+1 x n); row T is the terminal condition (zeros)
  double gamma_ = 1.0;
};

struct Policy {
  std::vector<markov::TransitionMatrix> steps;

  int horizon() const { return static_cast<int>(steps.size()); }
  int states() const { return steps.empty() ? 0 : steps.front().size(); }
  const markov::TransitionMatrix& step(int t) const {
    return steps.at(static_cast<std::size_t>(t));
  }
};

struct EnsembleDistribution {
  Eigen::MatrixXd rho;  // (T+1 x n), row 0 = initial distribution

  int horizon() const { return static_cast<int>(rho.rows()) - 1; }
  int states() const { return static_cast<int>(rho.cols()); }
  Eigen::VectorXd slice(int t) const { return rho.row(t); }

  void validate() const {
    for (Eigen::Index t = 0; t < rho.rows(); ++t) {
      if ((rho.row(t).array() < -1e-15).any())
        throw input_error("EnsembleDistribution: negative probability");
      if (std::fabs(rho.row(t).sum() - 1.0) > 1e-12)
        throw input_error("EnsembleDistribution: slice does not sum to one");
    }
  }
};

namespace detail {

inline Eigen::MatrixXd log_kernel(const Eigen::MatrixXd& kernel) {
  return kernel.array().max(0.0).log().matrix();  // zeros map to -inf
}

// log sum_a exp(w(a)), tolerating -inf entries.
inline double log_sum_exp(const Eigen::VectorXd& w) {
  const double m = w.maxCoeff();
  if (!std::isfinite(m)) return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) acc += std::exp(w(i) - m);
  return m + std::log(acc);
}

}  // namespace detail

// Backward desirability recursion over an arbitrary nonnegative kernel
// M(dest, origin):  z(t, b) = exp(U(t, b)/gamma) * sum_a M(a, b) z(t+1, a),
// computed in log space so long horizons and large |U|/gamma do not
// underflow. The standard solve uses M = default matrix; the uncertainty
// extensions pass attenuated kernels.
inline Desirability solve_backward_kernel(const Eigen::MatrixXd& kernel,
                                          const UtilitySchedule& sched) {
  sched.validate();
  const int n = sched.states();
  const int horizon = sched.horizon();
  if (kernel.rows() != n || kernel.cols() != n)
    throw input_error("solve_backward: kernel and schedule sizes differ");
  if ((kernel.array() < 0.0).any())
    throw input_error("solve_backward: kernel entries must be nonnegative");

  const Eigen::MatrixXd log_m = detail::log_kernel(kernel);
  Eigen::MatrixXd log_z = Eigen::MatrixXd::Zero(horizon + 1, n);
  Eigen::VectorXd col(n);
  for (int t = horizon - 1; t >= 0; --t) {
    for (int b = 0; b < n; ++b) {
      for (int a = 0; a < n; ++a) col(a) = log_m(a, b) + log_z(t + 1, a);
      const double lse = detail::log_sum_exp(col);
      if (!std::isfinite(lse)) throw input_error("unreachable desirability");
      log_z(t, b) = sched.reward(t, b) / sched.gamma + lse;
    }
  }
  return Desirability(std::move(log_z), sched.gamma);
}

// Closed-form optimal policy: column b of step t is the kernel column
// reweighted by the next-step desirability and renormalized,
// P_t(a, b) = M(a, b) z(t, a) / sum_a' M(a', b) z(t, a').
inline Policy policy_from_desirability(const Eigen::MatrixXd& kernel, const Desirability& des) {
  const int n = des.states();
  if (kernel.rows() != n || kernel.cols() != n)
    throw input_error("policy_from_desirability: size mismatch");
  const Eigen::MatrixXd log_m = detail::log_kernel(kernel);
  Policy policy;
  policy.steps.reserve(static_cast<std::size_t>(des.horizon()));
  Eigen::VectorXd w(n);
  for (int t = 0; t < des.horizon(); ++t) {
    Eigen::MatrixXd p(n, n);
    for (int b = 0; b < n; ++b) {
      for (int a = 0; a < n; ++a) w(a) = log_m(a, b) + des.log_z()(t, a);
      const double m = w.maxCoeff();
      if (!std::isfinite(m)) throw input_error("unreachable desirability");
      Eigen::VectorXd e = (w.array() - m).exp();
      for (int a = 0; a < n; ++a)
        if (kernel(a, b) == 0.0) e(a) = 0.0;  // zero default mass stays zero
      p.col(b) = e / e.sum();
    }
    policy.steps.emplace_back(std::move(p));
  }
  return policy;
}

struct Solution {
  Desirability desirability;
  Policy policy;
};

inline Solution solve_backward(const markov::TransitionMatrix& default_matrix,
                               const UtilitySchedule& sched) {
  Desirability des = solve_backward_kernel(default_matrix.matrix(), sched);
  Policy pol = policy_from_desirability(default_matrix.matrix(), des);
  return {std::move(des), std::move(pol)};
}

// Forward evolution rho(t+1) = P_t rho(t).
inline EnsembleDistribution propagate(const Eigen::VectorXd& rho0, const Policy& policy) {
  const int n = policy.states();
  if (rho0.size() != n) throw input_error("propagate: rho0 size mismatch");
  if (std::fabs(rho0.sum() - 1.0) > 1e-12 || (rho0.array() < -1e-15).any())
    throw input_error("propagate: rho0 is not a distribution");
  EnsembleDistribution dist;
  dist.rho.resize(policy.horizon() + 1, n);
  dist.rho.row(0) = rho0;
  for (int t = 0; t < policy.horizon(); ++t) {
    Eigen::VectorXd next = policy.step(t).matrix() * dist.rho.row(t).transpose();
    next /= next.sum();  // remove accumulated rounding so slices stay exact
    dist.rho.row(t + 1) = next;
  }
  return dist;
}

struct DispatchSeries {
  Eigen::VectorXd p_kw;    // (T+1), expected active power per time slice
  Eigen::VectorXd q_kvar;  // (T+1)
};

inline DispatchSeries expected_power(const EnsembleDistribution& dist,
                                     const markov::StateSpace& ss) {
  if (dist.states() != ss.size()) throw input_error("expected_power: size mismatch");
  DispatchSeries out;
  out.p_kw = dist.rho * ss.rated_power();
  out.q_kvar = dist.rho * ss.rated_reactive();
  return out;
}

// Expected cost of running `policy` from `dist` (which must be its own
// propagation): sum over steps of E_rho[ -U + gamma * KL(policy || default) ],
// with the 0 log 0 = 0 convention. Policies with mass outside the default
// support have infinite divergence and are rejected.
inline double objective_value(const Policy& policy, const EnsembleDistribution& dist,
                              const markov::TransitionMatrix& default_matrix,
                              const UtilitySchedule& sched) {
  sched.validate();
  const int n = sched.states();
  const int horizon = sched.horizon();
  if (policy.horizon() != horizon || dist.horizon() != horizon || policy.states() != n)
    throw input_error("objective_value: dimension mismatch");
  double total = 0.0;
  for (int t = 0; t < horizon; ++t) {
    const auto& p = policy.step(t);
    for (int b = 0; b < n; ++b) {
      const double rho_b = dist.rho(t, b);
      double inner = 0.0;
      for (int a = 0; a < n; ++a) {
        const double pab = p(a, b);
        if (pab == 0.0) continue;
        if (default_matrix(a, b) == 0.0) throw input_error("infinite divergence");
        inner += pab * (-sched.reward(t, a) +
                        sched.gamma * std::log(pab / default_matrix(a, b)));
      }
      total += rho_b * inner;
    }
  }
  return total;
}

// Largest relative violation of the desirability fixed point
// z(t, b) = exp(U(t, b)/gamma) * sum_a M(a, b) z(t+1, a), evaluated with
// plain linear-space arithmetic (an independent route from the log-space
// solver).
inline double fixed_point_residual(const Desirability& des, const Eigen::MatrixXd& kernel,
                                   const UtilitySchedule& sched) {
  const int n = des.states();
  const int horizon = des.horizon();
  if (sched.horizon() != horizon || sched.states() != n)
    throw input_error("fixed_point_residual: size mismatch");
  double worst = 0.0;
  for (int t = 0; t < horizon; ++t) {
    const Eigen::VectorXd z_next = des.z(t + 1);
    const Eigen::VectorXd z_here = des.z(t);
    for (int b = 0; b < n; ++b) {
      const double rhs =
          std::exp(sched.reward(t, b) / sched.gamma) * kernel.col(b).dot(z_next);
      worst = std::max(worst, std::fabs(rhs - z_here(b)) / z_here(b));
    }
  }
  return worst;
}

}  // namespace enskit::lsmdp
