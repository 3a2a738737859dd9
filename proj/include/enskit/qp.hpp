#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "enskit/common.hpp"

// Dense convex quadratic programming,
//     min 1/2 x' P x + q' x   s.t.  G x <= h,
// by a Mehrotra-style primal-dual interior-point method. Problem sizes here
// are tiny (a handful of variables, tens of constraints), so a dense LDLT of
// the reduced Newton system per iteration is plenty.

namespace enskit::qp {

enum class Status { optimal, max_iterations, primal_infeasible };

struct Result {
  Eigen::VectorXd x;
  Eigen::VectorXd z;  // multipliers of Gx <= h
  Status status = Status::max_iterations;
  int iterations = 0;
  double gap = std::numeric_limits<double>::infinity();
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
};

inline Result solve(const Eigen::MatrixXd& P, const Eigen::VectorXd& q, const Eigen::MatrixXd& G,
                    const Eigen::VectorXd& h, const Eigen::VectorXd& x0,
                    double tol = 1e-11, int max_iter = 200) {
  const Eigen::Index n = P.rows();
  const Eigen::Index m = G.rows();
  if (P.cols() != n || q.size() != n || (m > 0 && G.cols() != n) || h.size() != m ||
      x0.size() != n)
    throw input_error("qp::solve: inconsistent dimensions");

  Result res;
  res.x = x0;
  if (m == 0) {  // unconstrained
    res.x = P.ldlt().solve(-q);
    res.z = Eigen::VectorXd::Zero(0);
    res.status = Status::optimal;
    res.gap = 0.0;
    res.primal_residual = 0.0;
    res.dual_residual = (P * res.x + q).lpNorm<Eigen::Infinity>();
    return res;
  }

  Eigen::VectorXd x = x0;
  Eigen::VectorXd s = (h - G * x).cwiseMax(1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(m);

  const double q_scale = 1.0 + q.lpNorm<Eigen::Infinity>();
  const double h_scale = 1.0 + h.lpNorm<Eigen::Infinity>();

  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd r_dual = P * x + q + G.transpose() * z;
    const Eigen::VectorXd r_prim = G * x + s - h;
    const double mu = s.dot(z) / static_cast<double>(m);

    res.iterations = it;
    res.gap = mu;
    res.primal_residual = r_prim.lpNorm<Eigen::Infinity>();
    res.dual_residual = r_dual.lpNorm<Eigen::Infinity>();
    if (res.primal_residual <= tol * h_scale && res.dual_residual <= tol * q_scale &&
        mu <= tol) {
      res.x = x;
      res.z = z;
      res.status = Status::optimal;
      return res;
    }
    // Diverging multipliers with a stuck primal residual indicate an
    // infeasible constraint set.
    if (z.lpNorm<Eigen::Infinity>() > 1e13 && res.primal_residual > std::sqrt(tol)) {
      res.x = x;
      res.z = z;
      res.status = Status::primal_infeasible;
      return res;
    }

    const Eigen::VectorXd d = z.cwiseQuotient(s);
    Eigen::MatrixXd reduced = P;
    reduced.noalias() += G.transpose() * d.asDiagonal() * G;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(reduced);

    // Solves the Newton system with complementarity target
    // z.*ds + s.*dz = comp_rhs, eliminating ds and dz.
    auto solve_step = [&](const Eigen::VectorXd& comp_rhs, Eigen::VectorXd& dx,
                          Eigen::VectorXd& ds, Eigen::VectorXd& dz) {
      const Eigen::VectorXd tmp = (comp_rhs + z.cwiseProduct(r_prim)).cwiseQuotient(s);
      dx = ldlt.solve(-r_dual - G.transpose() * tmp);
      ds = -r_prim - G * dx;
      dz = (comp_rhs - z.cwiseProduct(ds)).cwiseQuotient(s);
    };

    auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
      return a;
    };

    // Predictor (affine scaling) step.
    Eigen::VectorXd dx_aff, ds_aff, dz_aff;
    solve_step(-s.cwiseProduct(z), dx_aff, ds_aff, dz_aff);
    const double alpha_aff =
        std::min(max_step(s, ds_aff), max_step(z, dz_aff));
    const double mu_aff =
        (s + alpha_aff * ds_aff).dot(z + alpha_aff * dz_aff) / static_cast<double>(m);
    const double sigma = std::pow(mu_aff / mu, 3);

    // Corrector with centering.
    Eigen::VectorXd dx, ds, dz;
    const Eigen::VectorXd comp =
        Eigen::VectorXd::Constant(m, sigma * mu) - s.cwiseProduct(z) -
        ds_aff.cwiseProduct(dz_aff);
    solve_step(comp, dx, ds, dz);

    const double alpha = 0.99 * std::min(max_step(s, ds), max_step(z, dz));
    x += alpha * dx;
    s += alpha * ds;
    z += alpha * dz;
  }

  res.x = x;
  res.z = z;
  res.status = Status::max_iterations;
  return res;
}

}  // namespace enskit::qp
