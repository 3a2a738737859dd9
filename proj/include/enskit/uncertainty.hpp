#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>

#include "enskit/common.hpp"
#include "enskit/lsmdp.hpp"
#include "enskit/markov.hpp"
#include "enskit/stats.hpp"

// Stochastic and robust extensions of the LS-MDP policy for uncertain
// default transition probabilities. Both reduce to the standard solve on an
// attenuated kernel: entries of the default matrix are damped by
// exp(-v / (2 m^2)) where m is the (mean or lower-bounded) entry and v the
// (known or upper-bounded) variance, so entries known less precisely carry
// less policy mass. The robust variant evaluates the same form on interval
// bounds built from Student-t (mean) and chi-square (variance) confidence
// intervals.

namespace enskit::uncertainty {

struct TransitionUncertainty {
  markov::TransitionMatrix mean;
  double sigma2 = 0.0;  // per-entry variance of the default probabilities
  // Optional per-entry variance generalization; when set it overrides the
  // scalar above.
  std::optional<Eigen::MatrixXd> sigma2_matrix;

  void validate() const {
    if (sigma2 < 0.0) throw input_error("TransitionUncertainty: variance must be nonnegative");
    if (sigma2_matrix) {
      if (sigma2_matrix->rows() != mean.size() || sigma2_matrix->cols() != mean.size())
        throw input_error("TransitionUncertainty: variance matrix size mismatch");
      if ((sigma2_matrix->array() < 0.0).any())
        throw input_error("TransitionUncertainty: variance must be nonnegative");
    }
  }
};

struct AmbiguitySet {
  Eigen::MatrixXd gamma_low;   // entrywise lower bound on the mean matrix
  Eigen::MatrixXd gamma_high;  // entrywise upper bound
  double zeta_low = 0.0;       // lower bound on the variance
  double zeta_high = 0.0;      // upper bound on the variance
  double varsigma = 0.0;       // confidence parameter of the mean bounds
  double xi = 0.0;             // confidence parameter of the variance bounds
  int sample_count = 0;

  void validate() const {
    if (gamma_low.rows() != gamma_low.cols() || gamma_low.rows() < 1)
      throw input_error("AmbiguitySet: bounds must be square");
    if (gamma_high.rows() != gamma_low.rows() || gamma_high.cols() != gamma_low.cols())
      throw input_error("AmbiguitySet: bound shapes differ");
    if ((gamma_low.array() > gamma_high.array() + 1e-15).any())
      throw input_error("AmbiguitySet: lower bound exceeds upper bound");
    if (zeta_low > zeta_high + 1e-15 || zeta_low < 0.0)
      throw input_error("AmbiguitySet: invalid variance bounds");
    if (sample_count < 2) throw input_error("insufficient samples");
  }
};

namespace detail {

// M(a,b) = m(a,b) * exp(-v(a,b) / (2 m(a,b)^2)); zero entries stay zero.
inline Eigen::MatrixXd attenuate(const Eigen::MatrixXd& m, const Eigen::MatrixXd& v) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double e = m(i, j);
      out(i, j) = e > 0.0 ? e * std::exp(-v(i, j) / (2.0 * e * e)) : 0.0;
    }
  return out;
}

}  // namespace detail

// Kernel of the stochastic extension (normally distributed default entries
// with known mean and variance).
inline Eigen::MatrixXd stochastic_kernel(const TransitionUncertainty& unc) {
  unc.validate();
  const Eigen::MatrixXd v =
      unc.sigma2_matrix ? *unc.sigma2_matrix
                        : Eigen::MatrixXd::Constant(unc.mean.size(), unc.mean.size(), unc.sigma2);
  return detail::attenuate(unc.mean.matrix(), v);
}

// Kernel of the robust extension: worst-case mean (lower bound) and
// worst-case variance (upper bound). The upper variance bound is used in
// both the policy and the value recursion.
inline Eigen::MatrixXd robust_kernel(const AmbiguitySet& amb) {
  amb.validate();
  const Eigen::MatrixXd v = Eigen::MatrixXd::Constant(amb.gamma_low.rows(),
                                                      amb.gamma_low.cols(), amb.zeta_high);
  Eigen::MatrixXd kernel = detail::attenuate(amb.gamma_low, v);
  for (Eigen::Index b = 0; b < kernel.cols(); ++b)
    if (kernel.col(b).maxCoeff() <= 0.0) throw input_error("ambiguity set degenerate");
  return kernel;
}

inline lsmdp::Policy stochastic_policy(const TransitionUncertainty& unc,
                                       const lsmdp::Desirability& z) {
  return lsmdp::policy_from_desirability(stochastic_kernel(unc), z);
}

inline lsmdp::Policy robust_policy(const AmbiguitySet& amb, const lsmdp::Desirability& z) {
  return lsmdp::policy_from_desirability(robust_kernel(amb), z);
}

inline lsmdp::Solution solve_backward_stochastic(const TransitionUncertainty& unc,
                                                 const lsmdp::UtilitySchedule& sched) {
  const Eigen::MatrixXd kernel = stochastic_kernel(unc);
  lsmdp::Desirability des = lsmdp::solve_backward_kernel(kernel, sched);
  lsmdp::Policy pol = lsmdp::policy_from_desirability(kernel, des);
  return {std::move(des), std::move(pol)};
}

inline lsmdp::Solution solve_backward_robust(const AmbiguitySet& amb,
                                             const lsmdp::UtilitySchedule& sched) {
  const Eigen::MatrixXd kernel = robust_kernel(amb);
  lsmdp::Desirability des = lsmdp::solve_backward_kernel(kernel, sched);
  lsmdp::Policy pol = lsmdp::policy_from_desirability(kernel, des);
  return {std::move(des), std::move(pol)};
}

// Confidence-interval ambiguity set from an empirical mean matrix and a
// scalar empirical standard deviation over N observations. Mean bounds use
// the Student-t quantile at 1 - varsigma/2 with N-1 degrees of freedom and
// are clipped to [0,1]; variance bounds use chi-square quantiles at xi/2 and
// 1 - xi/2 with N-1 degrees of freedom.
inline AmbiguitySet ambiguity_bounds(const Eigen::MatrixXd& mean_hat, double sigma_hat, int n_samples,
                                     double varsigma, double xi) {
  if (n_samples < 2) throw input_error("insufficient samples");
  if (varsigma <= 0.0 || varsigma > 1.0 || xi <= 0.0 || xi >= 1.0)
    throw input_error("ambiguity_bounds: confidence parameters must be in (0,1)");
  if (sigma_hat < 0.0) throw input_error("ambiguity_bounds: sigma_hat must be nonnegative");
  const double dof = static_cast<double>(n_samples - 1);
  const double t_mult = stats::student_t_quantile(1.0 - varsigma / 2.0, dof);
  const double half_width = t_mult * sigma_hat / std::sqrt(static_cast<double>(n_samples));
  AmbiguitySet amb;
  amb.gamma_low = (mean_hat.array() - half_width).max(0.0).min(1.0).matrix();
  amb.gamma_high = (mean_hat.array() + half_width).max(0.0).min(1.0).matrix();
  const double s2 = sigma_hat * sigma_hat;
  amb.zeta_low = dof * s2 / stats::chi_square_quantile(1.0 - xi / 2.0, dof);
  amb.zeta_high = dof * s2 / stats::chi_square_quantile(xi / 2.0, dof);
  amb.varsigma = varsigma;
  amb.xi = xi;
  amb.sample_count = n_samples;
  return amb;
}

// Degenerate set whose robust solve coincides with the stochastic one;
// mostly useful for tests and limit checks.
inline AmbiguitySet collapsed_set(const TransitionUncertainty& unc) {
  unc.validate();
  AmbiguitySet amb;
  amb.gamma_low = unc.mean.matrix();
  amb.gamma_high = unc.mean.matrix();
  amb.zeta_low = unc.sigma2;
  amb.zeta_high = unc.sigma2;
  amb.varsigma = 1.0;
  amb.xi = 0.999;
  amb.sample_count = 2;
  return amb;
}

}  // namespace enskit::uncertainty
