#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "enskit/common.hpp"
#include "enskit/qp.hpp"
#include "enskit/stats.hpp"

// Chance-constrained optimal power flow on a radial feeder, in the
// LinDistFlow approximation: line flows aggregate the downstream net loads,
// squared voltage magnitudes drop linearly along each path, and losses are
// the usual r |f|^2 / u0 estimate on top of the lossless flows. Gaussian
// forecast errors at the buses enter as a deterministic tightening of the
// squared-voltage band: each bound moves inward by the normal quantile of
// 1 - epsilon times the standard deviation that the errors induce on that
// bus voltage.
//
// Controllable ensemble consumption (one box range per flexible bus) is
// priced by externally supplied multipliers, which is exactly the shape of
// the utility subproblem inside the dual-decomposition loop.

namespace enskit::gridopf {

struct FlexRange {
  double p_min_kw = 0.0;
  double p_max_kw = 0.0;
  double q_min_kvar = 0.0;
  double q_max_kvar = 0.0;
};

struct Bus {
  std::string id;
  Eigen::VectorXd load_p_kw;   // nominal load per time slice (size T, or 1 = constant)
  Eigen::VectorXd load_q_kvar;
  double v_min_pu = 0.95;
  double v_max_pu = 1.05;
  std::optional<FlexRange> flex;
};

struct Line {
  std::string from;
  std::string to;
  double r_pu = 0.0;
  double x_pu = 0.0;
};

class RadialNetwork {
 public:
  RadialNetwork(std::vector<Bus> buses, std::vector<Line> lines, std::string substation,
                double base_kva, double v0_pu = 1.0)
      : buses_(std::move(buses)), base_kva_(base_kva), v0_pu_(v0_pu) {
    if (buses_.empty()) throw input_error("RadialNetwork: no buses");
    if (base_kva_ <= 0.0) throw input_error("RadialNetwork: base power must be positive");
    if (v0_pu_ <= 0.0) throw input_error("RadialNetwork: substation voltage must be positive");
    for (std::size_t i = 0; i < buses_.size(); ++i) {
      if (!(buses_[i].v_min_pu < buses_[i].v_max_pu))
        throw input_error("RadialNetwork: bus voltage bounds inverted");
      if (!index_.emplace(buses_[i].id, static_cast<int>(i)).second)
        throw input_error("RadialNetwork: duplicate bus id " + buses_[i].id);
    }
    root_ = bus_index(substation);
    if (lines.size() + 1 != buses_.size())
      throw input_error("RadialNetwork: a tree needs exactly one line less than buses");

    // Orient edges away from the root and record subtree membership.
    const int n = n_buses();
    const int e_cnt = static_cast<int>(lines.size());
    std::vector<std::vector<std::pair<int, int>>> adj(static_cast<std::size_t>(n));
    for (int e = 0; e < e_cnt; ++e) {
      const int a = bus_index(lines[static_cast<std::size_t>(e)].from);
      const int b = bus_index(lines[static_cast<std::size_t>(e)].to);
      adj[static_cast<std::size_t>(a)].emplace_back(b, e);
      adj[static_cast<std::size_t>(b)].emplace_back(a, e);
    }
    lines_.resize(lines.size());
    child_.assign(static_cast<std::size_t>(e_cnt), -1);
    r_.resize(e_cnt);
    x_.resize(e_cnt);
    std::vector<int> stack{root_};
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    seen[static_cast<std::size_t>(root_)] = true;
    order_.clear();
    while (!stack.empty()) {
      const int b = stack.back();
      stack.pop_back();
      order_.push_back(b);
      for (const auto& [nb, e] : adj[static_cast<std::size_t>(b)]) {
        if (seen[static_cast<std::size_t>(nb)]) continue;
        seen[static_cast<std::size_t>(nb)] = true;
        lines_[static_cast<std::size_t>(e)] = lines[static_cast<std::size_t>(e)];
        child_[static_cast<std::size_t>(e)] = nb;
        r_(e) = lines[static_cast<std::size_t>(e)].r_pu;
        x_(e) = lines[static_cast<std::size_t>(e)].x_pu;
        stack.push_back(nb);
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw input_error("RadialNetwork: graph is not a connected tree");
    for (const int c : child_)
      if (c < 0) throw input_error("RadialNetwork: graph contains a cycle");

    // subtree_(e, b) = 1 when bus b lies below edge e; this single matrix
    // gives both flow aggregation and path membership.
    subtree_ = Eigen::MatrixXd::Zero(e_cnt, n);
    for (int b = 0; b < n; ++b) {
      int cur = b;
      while (cur != root_) {
        const int e = edge_into(cur);
        subtree_(e, b) = 1.0;
        cur = bus_index(other_end(e, cur));
      }
    }
  }

  int n_buses() const { return static_cast<int>(buses_.size()); }
  int n_lines() const { return static_cast<int>(lines_.size()); }
  int root() const { return root_; }
  double base_kva() const { return base_kva_; }
  double v0_pu() const { return v0_pu_; }
  const Bus& bus(int i) const { return buses_.at(static_cast<std::size_t>(i)); }
  const Line& line(int e) const { return lines_.at(static_cast<std::size_t>(e)); }
  int line_child(int e) const { return child_.at(static_cast<std::size_t>(e)); }
  const Eigen::VectorXd& line_r() const { return r_; }
  const Eigen::VectorXd& line_x() const { return x_; }
  const Eigen::MatrixXd& subtree() const { return subtree_; }

  int bus_index(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw input_error("RadialNetwork: unknown bus " + id);
    return it->second;
  }

  std::vector<int> flexible_buses() const {
    std::vector<int> out;
    for (int b = 0; b < n_buses(); ++b)
      if (buses_[static_cast<std::size_t>(b)].flex) out.push_back(b);
    return out;
  }

  double load_p_kw(int b, int t) const { return pick(bus(b).load_p_kw, t); }
  double load_q_kvar(int b, int t) const { return pick(bus(b).load_q_kvar, t); }

  int horizon() const {
    int h = 1;
    for (const auto& b : buses_) {
      h = std::max<int>(h, static_cast<int>(b.load_p_kw.size()));
      h = std::max<int>(h, static_cast<int>(b.load_q_kvar.size()));
    }
    return h;
  }

 private:
  static double pick(const Eigen::VectorXd& v, int t) {
    if (v.size() == 0) return 0.0;
    if (v.size() == 1) return v(0);
    if (t < 0 || t >= v.size()) throw input_error("RadialNetwork: time index out of range");
    return v(t);
  }
  int edge_into(int b) const {
    for (int e = 0; e < n_lines(); ++e)
      if (child_[static_cast<std::size_t>(e)] == b) return e;
    throw input_error("RadialNetwork: internal tree inconsistency");
  }
  std::string other_end(int e, int b) const {
    const auto& l = lines_[static_cast<std::size_t>(e)];
    return bus_index(l.from) == b ? l.to : l.from;
  }

  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::map<std::string, int> index_;
  std::vector<int> child_;   // bus below each edge
  std::vector<int> order_;
  Eigen::VectorXd r_, x_;
  Eigen::MatrixXd subtree_;
  int root_ = 0;
  double base_kva_ = 0.0;
  double v0_pu_ = 1.0;
};

struct UncertainInjection {
  Eigen::MatrixXd sigma_kw;  // (n_bus x T) forecast-error std dev, or (n_bus x 1)
  double epsilon = 0.05;     // per-constraint violation budget

  void validate(int n_buses) const {
    if (epsilon <= 0.0 || epsilon >= 0.5)
      throw input_error("UncertainInjection: epsilon must be in (0, 0.5)");
    if (sigma_kw.rows() != n_buses)
      throw input_error("UncertainInjection: sigma row count must match buses");
    if ((sigma_kw.array() < 0.0).any())
      throw input_error("UncertainInjection: sigma must be nonnegative");
  }

  double sigma(int b, int t) const {
    if (sigma_kw.cols() == 1) return sigma_kw(b, 0);
    if (t < 0 || t >= sigma_kw.cols())
      throw input_error("UncertainInjection: time index out of range");
    return sigma_kw(b, t);
  }

  static UncertainInjection none(int n_buses) {
    UncertainInjection u;
    u.sigma_kw = Eigen::MatrixXd::Zero(n_buses, 1);
    u.epsilon = 0.05;
    return u;
  }
};

struct OpfDecision {
  Eigen::VectorXd p_kw;          // scheduled ensemble consumption per bus
  Eigen::VectorXd q_kvar;
  Eigen::VectorXd u_pu;          // squared voltage magnitude per bus
  Eigen::VectorXd flow_p_kw;     // per line, oriented away from the root
  Eigen::VectorXd flow_q_kvar;
  Eigen::VectorXd lambda_p;      // marginal network cost of 1 kW at each bus
  Eigen::VectorXd lambda_q;
  double losses_kw = 0.0;
  double objective = 0.0;        // loss_tariff * losses - price' * schedule
  double kkt_residual = 0.0;
  int qp_iterations = 0;
};

namespace detail {

struct Assembled {
  std::vector<int> flex;           // flexible bus indices
  Eigen::VectorXd f0_p, f0_q;      // fixed-load flow component per line (pu)
  Eigen::MatrixXd a;               // (lines x flex) incidence of flex injections
  Eigen::VectorXd u_base;          // voltage at zero flexible injection (pu^2)
  Eigen::MatrixXd cp, cq;          // du(bus)/dx for p and q parts (n_bus x flex)
  Eigen::VectorXd u_lo, u_hi;      // tightened squared-voltage bounds per bus
};

inline Assembled assemble(const RadialNetwork& net, const UncertainInjection& unc, int t,
                          double kappa) {
  const int n = net.n_buses();
  const int e_cnt = net.n_lines();
  Assembled as;
  as.flex = net.flexible_buses();
  const auto& sub = net.subtree();
  const double s_base = net.base_kva();
  const double u0 = net.v0_pu() * net.v0_pu();

  as.f0_p = Eigen::VectorXd::Zero(e_cnt);
  as.f0_q = Eigen::VectorXd::Zero(e_cnt);
  for (int e = 0; e < e_cnt; ++e)
    for (int b = 0; b < n; ++b)
      if (sub(e, b) > 0.0) {
        as.f0_p(e) += net.load_p_kw(b, t) / s_base;
        as.f0_q(e) += net.load_q_kvar(b, t) / s_base;
      }

  as.a = Eigen::MatrixXd::Zero(e_cnt, static_cast<Eigen::Index>(as.flex.size()));
  for (std::size_t j = 0; j < as.flex.size(); ++j)
    for (int e = 0; e < e_cnt; ++e) as.a(e, static_cast<Eigen::Index>(j)) = sub(e, as.flex[j]);

  const Eigen::VectorXd& r = net.line_r();
  const Eigen::VectorXd& x = net.line_x();
  as.u_base.resize(n);
  as.cp.resize(n, static_cast<Eigen::Index>(as.flex.size()));
  as.cq.resize(n, static_cast<Eigen::Index>(as.flex.size()));
  as.u_lo.resize(n);
  as.u_hi.resize(n);
  for (int b = 0; b < n; ++b) {
    const Eigen::VectorXd path_r = sub.col(b).cwiseProduct(r);
    const Eigen::VectorXd path_x = sub.col(b).cwiseProduct(x);
    as.u_base(b) = u0 - 2.0 * (path_r.dot(as.f0_p) + path_x.dot(as.f0_q));
    as.cp.row(b) = -2.0 * (path_r.transpose() * as.a);
    as.cq.row(b) = -2.0 * (path_x.transpose() * as.a);

    // Variance of u(b) from the active-power forecast errors: the
    // sensitivity to bus k is twice the shared-path resistance.
    double var_u = 0.0;
    for (int k = 0; k < n; ++k) {
      const double sens = sub.col(b).cwiseProduct(sub.col(k)).dot(r);
      const double sig = unc.sigma(k, t) / s_base;
      var_u += 4.0 * sens * sens * sig * sig;
    }
    const double sigma_u = std::sqrt(var_u);
    const double vmin2 = net.bus(b).v_min_pu * net.bus(b).v_min_pu;
    const double vmax2 = net.bus(b).v_max_pu * net.bus(b).v_max_pu;
    as.u_lo(b) = vmin2 + kappa * sigma_u;
    as.u_hi(b) = vmax2 - kappa * sigma_u;
    if (b != net.root() && as.u_lo(b) > as.u_hi(b))
      throw input_error("chance constraints infeasible: tightening exceeds the voltage band at bus " +
                        net.bus(b).id);
  }
  return as;
}

}  // namespace detail

// Solves one time slice of the voltage-constrained dispatch:
//   min  loss_tariff * losses(x) - sum_b (lambda_p(b) p_b + lambda_q(b) q_b)
// over the flexible injections, subject to the tightened squared-voltage
// band at every non-root bus and the per-bus dispatch ranges. The returned
// lambda_p / lambda_q are the marginal costs of one extra kW (kVAr) of
// consumption at each bus, including the prices of binding voltage
// constraints; at an interior optimum of a flexible bus they equal the
// input price.
inline OpfDecision solve_ccopf(const RadialNetwork& net, const UncertainInjection& unc,
                               const Eigen::VectorXd& lambda_p, const Eigen::VectorXd& lambda_q,
                               int t, double loss_tariff,
                               std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>
                                   warm_start_kw = std::nullopt) {
  const int n = net.n_buses();
  unc.validate(n);
  if (lambda_p.size() != n || lambda_q.size() != n)
    throw input_error("solve_ccopf: multiplier vectors must have one entry per bus");
  if (loss_tariff < 0.0) throw input_error("solve_ccopf: loss tariff must be nonnegative");

  const double kappa = stats::normal_quantile(1.0 - unc.epsilon);
  const auto as = detail::assemble(net, unc, t, kappa);
  const int nf = static_cast<int>(as.flex.size());
  const double s_base = net.base_kva();
  const double u0 = net.v0_pu() * net.v0_pu();
  const Eigen::VectorXd& r = net.line_r();

  Eigen::VectorXd x_p = Eigen::VectorXd::Zero(nf);
  Eigen::VectorXd x_q = Eigen::VectorXd::Zero(nf);
  Eigen::VectorXd z_volt_hi = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z_volt_lo = Eigen::VectorXd::Zero(n);
  double kkt_residual = 0.0;
  int qp_iterations = 0;

  if (nf > 0) {
    // Quadratic pieces (objective divided by s_base; same argmin).
    const Eigen::MatrixXd ara = as.a.transpose() * r.asDiagonal() * as.a;
    const int dim = 2 * nf;
    Eigen::MatrixXd p_mat = Eigen::MatrixXd::Zero(dim, dim);
    p_mat.topLeftCorner(nf, nf) = 2.0 * loss_tariff / u0 * ara;
    p_mat.bottomRightCorner(nf, nf) = 2.0 * loss_tariff / u0 * ara;
    Eigen::VectorXd q_vec(dim);
    q_vec.head(nf) = 2.0 * loss_tariff / u0 * (as.a.transpose() * r.cwiseProduct(as.f0_p));
    q_vec.tail(nf) = 2.0 * loss_tariff / u0 * (as.a.transpose() * r.cwiseProduct(as.f0_q));
    for (int j = 0; j < nf; ++j) {
      q_vec(j) -= lambda_p(as.flex[static_cast<std::size_t>(j)]);
      q_vec(nf + j) -= lambda_q(as.flex[static_cast<std::size_t>(j)]);
    }

    // Constraint rows: voltage band per non-root bus, then the dispatch box.
    std::vector<int> volt_rows;
    for (int b = 0; b < n; ++b)
      if (b != net.root()) volt_rows.push_back(b);
    const int m = 2 * static_cast<int>(volt_rows.size()) + 2 * dim;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, dim);
    Eigen::VectorXd h(m);
    int row = 0;
    for (const int b : volt_rows) {  // u(b) <= u_hi
      g.row(row).head(nf) = as.cp.row(b);
      g.row(row).tail(nf) = as.cq.row(b);
      h(row) = as.u_hi(b) - as.u_base(b);
      ++row;
    }
    for (const int b : volt_rows) {  // u(b) >= u_lo
      g.row(row).head(nf) = -as.cp.row(b);
      g.row(row).tail(nf) = -as.cq.row(b);
      h(row) = as.u_base(b) - as.u_lo(b);
      ++row;
    }
    Eigen::VectorXd lo(dim), hi(dim);
    for (int j = 0; j < nf; ++j) {
      const auto& f = *net.bus(as.flex[static_cast<std::size_t>(j)]).flex;
      if (f.p_min_kw > f.p_max_kw || f.q_min_kvar > f.q_max_kvar)
        throw input_error("solve_ccopf: empty dispatch range at bus " +
                          net.bus(as.flex[static_cast<std::size_t>(j)]).id);
      lo(j) = f.p_min_kw / s_base;
      hi(j) = f.p_max_kw / s_base;
      lo(nf + j) = f.q_min_kvar / s_base;
      hi(nf + j) = f.q_max_kvar / s_base;
    }
    g.block(row, 0, dim, dim) = Eigen::MatrixXd::Identity(dim, dim);
    h.segment(row, dim) = hi;
    row += dim;
    g.block(row, 0, dim, dim) = -Eigen::MatrixXd::Identity(dim, dim);
    h.segment(row, dim) = -lo;

    // Reference point: the warm start clipped into the box, or its center.
    Eigen::VectorXd x_ref(dim);
    if (warm_start_kw) {
      for (int j = 0; j < nf; ++j) {
        x_ref(j) = warm_start_kw->first(as.flex[static_cast<std::size_t>(j)]) / s_base;
        x_ref(nf + j) = warm_start_kw->second(as.flex[static_cast<std::size_t>(j)]) / s_base;
      }
      x_ref = x_ref.cwiseMax(lo).cwiseMin(hi);
    } else {
      x_ref = 0.5 * (lo + hi);
    }

    const bool objective_is_zero =
        p_mat.lpNorm<Eigen::Infinity>() == 0.0 && q_vec.lpNorm<Eigen::Infinity>() == 0.0;
    Eigen::VectorXd x_sol, z_sol;
    if (objective_is_zero && ((g * x_ref - h).array() <= 1e-10).all()) {
      // Every feasible point is optimal; keep the proposal exactly.
      x_sol = x_ref;
      z_sol = Eigen::VectorXd::Zero(m);
      kkt_residual = 0.0;
    } else {
      // Tiny proximal centering at the reference selects, among optimal
      // points of a degenerate objective, the one nearest the proposal; the
      // weight shrinks until the KKT residual of the unregularized problem
      // meets tolerance. A zero objective turns this into a plain
      // projection of the proposal onto the feasible set.
      const double scale = std::max({1.0, p_mat.lpNorm<Eigen::Infinity>(),
                                     q_vec.lpNorm<Eigen::Infinity>()});
      double prox = objective_is_zero ? 1.0 : 1e-6 * scale;
      for (int attempt = 0; attempt < 4; ++attempt) {
        Eigen::MatrixXd p_reg = p_mat;
        p_reg.diagonal().array() += 2.0 * prox;
        const Eigen::VectorXd q_reg = q_vec - 2.0 * prox * x_ref;
        const qp::Result sol = qp::solve(p_reg, q_reg, g, h, x_ref);
        if (sol.status == qp::Status::primal_infeasible)
          throw input_error("chance constraints infeasible");
        if (sol.status != qp::Status::optimal)
          throw convergence_error("solve_ccopf: interior-point iteration limit reached");
        x_sol = sol.x;
        z_sol = sol.z;
        qp_iterations += sol.iterations;
        if (objective_is_zero) {
          // Any feasible point satisfies the original first-order
          // conditions with zero multipliers.
          z_sol.setZero();
          kkt_residual = std::max(0.0, (g * x_sol - h).maxCoeff());
          break;
        }
        const double stat = (p_mat * x_sol + q_vec + g.transpose() * z_sol)
                                .lpNorm<Eigen::Infinity>();
        kkt_residual = std::max({stat, sol.primal_residual, sol.gap});
        if (kkt_residual <= 1e-8) break;
        prox *= 1e-3;
      }
      if (kkt_residual > 1e-8)
        throw convergence_error("solve_ccopf: KKT residual above tolerance");
    }

    x_p = x_sol.head(nf);
    x_q = x_sol.tail(nf);
    for (std::size_t k = 0; k < volt_rows.size(); ++k) {
      z_volt_hi(volt_rows[k]) = z_sol(static_cast<Eigen::Index>(k));
      z_volt_lo(volt_rows[k]) = z_sol(static_cast<Eigen::Index>(volt_rows.size() + k));
    }
  }

  // Recover the physical solution.
  OpfDecision out;
  const Eigen::VectorXd f_p = as.f0_p + as.a * x_p;
  const Eigen::VectorXd f_q = as.f0_q + as.a * x_q;
  out.flow_p_kw = f_p * s_base;
  out.flow_q_kvar = f_q * s_base;
  out.p_kw = Eigen::VectorXd::Zero(n);
  out.q_kvar = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < nf; ++j) {
    out.p_kw(as.flex[static_cast<std::size_t>(j)]) = x_p(j) * s_base;
    out.q_kvar(as.flex[static_cast<std::size_t>(j)]) = x_q(j) * s_base;
  }
  out.u_pu.resize(n);
  const auto& sub = net.subtree();
  for (int b = 0; b < n; ++b) {
    out.u_pu(b) = u0 - 2.0 * (sub.col(b).cwiseProduct(net.line_r()).dot(f_p) +
                              sub.col(b).cwiseProduct(net.line_x()).dot(f_q));
    if (nf == 0 && b != net.root() &&
        (out.u_pu(b) > as.u_hi(b) + 1e-9 || out.u_pu(b) < as.u_lo(b) - 1e-9))
      throw input_error("chance constraints infeasible");
  }
  const double losses_pu =
      (net.line_r().array() * (f_p.array().square() + f_q.array().square())).sum() / u0;
  out.losses_kw = losses_pu * s_base;

  double priced = 0.0;
  for (int j = 0; j < nf; ++j) {
    const int b = as.flex[static_cast<std::size_t>(j)];
    priced += lambda_p(b) * out.p_kw(b) + lambda_q(b) * out.q_kvar(b);
  }
  out.objective = loss_tariff * out.losses_kw - priced;

  // Marginal network cost of one extra kW / kVAr of consumption at each
  // bus: marginal losses plus the prices of binding voltage constraints.
  out.lambda_p.resize(n);
  out.lambda_q.resize(n);
  for (int b = 0; b < n; ++b) {
    const Eigen::VectorXd path_b_r = sub.col(b).cwiseProduct(net.line_r());
    const Eigen::VectorXd path_b_x = sub.col(b).cwiseProduct(net.line_x());
    double mp = loss_tariff * 2.0 / u0 * path_b_r.dot(f_p);
    double mq = loss_tariff * 2.0 / u0 * path_b_r.dot(f_q);
    for (int bb = 0; bb < n; ++bb) {
      const double w = z_volt_hi(bb) - z_volt_lo(bb);
      if (w == 0.0) continue;
      const double sens_r = sub.col(bb).cwiseProduct(sub.col(b)).dot(net.line_r());
      const double sens_x = sub.col(bb).cwiseProduct(sub.col(b)).dot(net.line_x());
      mp += w * (-2.0 * sens_r);
      mq += w * (-2.0 * sens_x);
    }
    out.lambda_p(b) = mp;
    out.lambda_q(b) = mq;
  }
  out.kkt_residual = kkt_residual;
  out.qp_iterations = qp_iterations;
  return out;
}

// Deterministic LinDistFlow dispatch: same problem with no tightening.
inline OpfDecision solve_deterministic(const RadialNetwork& net, const Eigen::VectorXd& lambda_p,
                                       const Eigen::VectorXd& lambda_q, int t, double loss_tariff,
                                       std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>
                                           warm_start_kw = std::nullopt) {
  return solve_ccopf(net, UncertainInjection::none(net.n_buses()), lambda_p, lambda_q, t,
                     loss_tariff, std::move(warm_start_kw));
}

}  // namespace enskit::gridopf
