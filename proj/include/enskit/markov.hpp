#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "enskit/common.hpp"

// Markov-process model of a load ensemble: discretize a power trajectory
// into ordered states, count transitions into a column-stochastic matrix,
// simulate, and validate against the empirical occupancy.
//
// Convention used throughout the library: transition matrices are
// column-stochastic, entry (a, b) is the probability of moving from origin
// state b to destination state a, so each column sums to one and the
// distribution evolves as rho' = P * rho.

namespace enskit::markov {

constexpr double kColumnSumTol = 1e-12;

struct StateLevel {
  double power_kw = 0.0;      // rated active power of the state
  double reactive_kvar = 0.0; // rated reactive power
  double lo = 0.0;            // bin lower bound (inclusive)
  double hi = 0.0;            // bin upper bound (exclusive; inclusive for the top bin)
};

class StateSpace {
 public:
  explicit StateSpace(std::vector<StateLevel> levels) : levels_(std::move(levels)) {
    if (levels_.size() < 2) throw input_error("StateSpace: need at least two states");
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      const auto& s = levels_[i];
      if (!(s.lo < s.hi)) throw input_error("StateSpace: bin has non-positive width");
      if (s.power_kw < s.lo || s.power_kw > s.hi)
        throw input_error("StateSpace: rated power outside its bin");
      if (i > 0 && std::fabs(levels_[i - 1].hi - s.lo) > 1e-9 * std::max(1.0, std::fabs(s.lo)))
        throw input_error("StateSpace: bins must be contiguous and ordered");
    }
  }

  int size() const { return static_cast<int>(levels_.size()); }
  const StateLevel& level(int i) const { return levels_.at(static_cast<std::size_t>(i)); }
  const std::vector<StateLevel>& levels() const { return levels_; }

  double range_lo() const { return levels_.front().lo; }
  double range_hi() const { return levels_.back().hi; }

  // Index of the bin containing `power_kw`, or -1 if outside the range.
  int bin_index(double power_kw) const {
    if (power_kw < range_lo() || power_kw > range_hi()) return -1;
    int lo = 0, hi = size() - 1;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (power_kw < levels_[static_cast<std::size_t>(mid)].hi)
        hi = mid;
      else
        lo = mid + 1;
    }
    return lo;
  }

  Eigen::VectorXd rated_power() const {
    Eigen::VectorXd p(size());
    for (int i = 0; i < size(); ++i) p(i) = levels_[static_cast<std::size_t>(i)].power_kw;
    return p;
  }
  Eigen::VectorXd rated_reactive() const {
    Eigen::VectorXd q(size());
    for (int i = 0; i < size(); ++i) q(i) = levels_[static_cast<std::size_t>(i)].reactive_kvar;
    return q;
  }

  double dispatch_min_kw() const {
    double m = levels_.front().power_kw;
    for (const auto& s : levels_) m = std::min(m, s.power_kw);
    return m;
  }
  double dispatch_max_kw() const {
    double m = levels_.front().power_kw;
    for (const auto& s : levels_) m = std::max(m, s.power_kw);
    return m;
  }

 private:
  std::vector<StateLevel> levels_;
};

// Uniformly sampled power-consumption series. Timestamps are Unix epoch
// seconds; gaps (missing rows) are tolerated as long as every interval is an
// integer multiple of the base period, and are recorded so transition
// counting can skip across them.
struct Trajectory {
  std::vector<std::int64_t> time_s;
  std::vector<double> active_kw;
  std::vector<double> reactive_kvar;  // empty when the column is absent
  double period_s = 0.0;
  std::vector<std::size_t> gap_indices;  // i such that the step i -> i+1 spans a gap

  std::size_t size() const { return active_kw.size(); }
  bool has_reactive() const { return !reactive_kvar.empty(); }

  void validate() const {
    if (active_kw.empty()) throw input_error("Trajectory: empty");
    if (time_s.size() != active_kw.size())
      throw input_error("Trajectory: timestamp/value length mismatch");
    if (has_reactive() && reactive_kvar.size() != active_kw.size())
      throw input_error("Trajectory: reactive column length mismatch");
    if (period_s <= 0.0) throw input_error("Trajectory: sampling period must be positive");
    for (std::size_t i = 1; i < time_s.size(); ++i) {
      const double dt = static_cast<double>(time_s[i] - time_s[i - 1]);
      if (dt <= 0.0) throw input_error("Trajectory: timestamps must be strictly increasing");
      const double k = dt / period_s;
      if (std::fabs(k - std::round(k)) > 1e-6)
        throw input_error("Trajectory: non-uniform sampling at index " + std::to_string(i));
    }
  }
};

// Builds a Trajectory from raw columns. The base period is the most common
// interval; longer intervals that are whole multiples of it are flagged as
// gaps, anything else is rejected as non-uniform.
inline Trajectory make_trajectory(std::vector<std::int64_t> time_s, std::vector<double> active_kw,
                                  std::vector<double> reactive_kvar = {}) {
  Trajectory t;
  t.time_s = std::move(time_s);
  t.active_kw = std::move(active_kw);
  t.reactive_kvar = std::move(reactive_kvar);
  if (t.time_s.size() < 2) throw input_error("Trajectory: need at least two samples");
  std::map<std::int64_t, std::size_t> interval_counts;
  for (std::size_t i = 1; i < t.time_s.size(); ++i) {
    const std::int64_t dt = t.time_s[i] - t.time_s[i - 1];
    if (dt <= 0) throw input_error("Trajectory: timestamps must be strictly increasing");
    ++interval_counts[dt];
  }
  std::int64_t period = interval_counts.begin()->first;
  for (const auto& [dt, count] : interval_counts)
    if (count > interval_counts.at(period)) period = dt;
  t.period_s = static_cast<double>(period);
  for (std::size_t i = 1; i < t.time_s.size(); ++i) {
    const std::int64_t dt = t.time_s[i] - t.time_s[i - 1];
    if (dt % period != 0)
      throw input_error("Trajectory: non-uniform sampling at index " + std::to_string(i));
    if (dt > period) t.gap_indices.push_back(i - 1);
  }
  t.validate();
  return t;
}

class TransitionMatrix {
 public:
  explicit TransitionMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1)
      throw input_error("TransitionMatrix: must be square and non-empty");
    for (Eigen::Index b = 0; b < m_.cols(); ++b) {
      double sum = 0.0;
      for (Eigen::Index a = 0; a < m_.rows(); ++a) {
        const double v = m_(a, b);
        if (!(v >= 0.0 && v <= 1.0 + 1e-15))
          throw input_error("TransitionMatrix: entry outside [0,1]");
        sum += v;
      }
      if (std::fabs(sum - 1.0) > kColumnSumTol)
        throw input_error("TransitionMatrix: column " + std::to_string(b) +
                          " does not sum to one");
    }
  }

  int size() const { return static_cast<int>(m_.rows()); }
  double operator()(int dest, int origin) const { return m_(dest, origin); }
  const Eigen::MatrixXd& matrix() const { return m_; }

 private:
  Eigen::MatrixXd m_;
};

enum class BinningScheme { uniform, quantile };

// Discretizes the trajectory's operating range into `n_states` ordered power
// states. Uniform bins have equal widths; quantile bins hold equal sample
// counts. The rated power of each state is the mean of the samples falling
// in the bin (bin midpoint when empty).
inline StateSpace discretize(const Trajectory& traj, int n_states, BinningScheme scheme) {
  traj.validate();
  if (n_states < 2) throw input_error("discretize: need at least two states");
  const double lo = *std::min_element(traj.active_kw.begin(), traj.active_kw.end());
  const double hi = *std::max_element(traj.active_kw.begin(), traj.active_kw.end());
  if (!(hi > lo)) throw input_error("dispatch range is empty");

  std::vector<double> distinct(traj.active_kw);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) < n_states)
    throw input_error("discretize: fewer distinct power values than states");

  std::vector<double> edges(static_cast<std::size_t>(n_states) + 1);
  if (scheme == BinningScheme::uniform) {
    const double width = (hi - lo) / n_states;
    for (int k = 0; k <= n_states; ++k) edges[static_cast<std::size_t>(k)] = lo + width * k;
  } else {
    std::vector<double> sorted(traj.active_kw);
    std::sort(sorted.begin(), sorted.end());
    const double last = static_cast<double>(sorted.size() - 1);
    for (int k = 0; k <= n_states; ++k) {
      const double pos = last * static_cast<double>(k) / n_states;
      const auto i = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(i);
      edges[static_cast<std::size_t>(k)] =
          i + 1 < sorted.size() ? sorted[i] * (1.0 - frac) + sorted[i + 1] * frac : sorted[i];
    }
    for (std::size_t k = 1; k < edges.size(); ++k)
      if (!(edges[k] > edges[k - 1]))
        throw input_error("discretize: quantile bins degenerate (heavily tied data)");
  }
  edges.front() = lo;
  edges.back() = hi;

  std::vector<double> p_sum(static_cast<std::size_t>(n_states), 0.0);
  std::vector<double> q_sum(static_cast<std::size_t>(n_states), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(n_states), 0);
  auto edge_bin = [&](double v) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), v);
    auto k = static_cast<std::size_t>(std::distance(edges.begin(), it));
    k = k == 0 ? 0 : k - 1;
    return std::min(k, static_cast<std::size_t>(n_states - 1));
  };
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const std::size_t k = edge_bin(traj.active_kw[i]);
    p_sum[k] += traj.active_kw[i];
    if (traj.has_reactive()) q_sum[k] += traj.reactive_kvar[i];
    ++count[k];
  }

  std::vector<StateLevel> levels(static_cast<std::size_t>(n_states));
  for (int k = 0; k < n_states; ++k) {
    auto& s = levels[static_cast<std::size_t>(k)];
    s.lo = edges[static_cast<std::size_t>(k)];
    s.hi = edges[static_cast<std::size_t>(k) + 1];
    const std::size_t c = count[static_cast<std::size_t>(k)];
    s.power_kw = c > 0 ? p_sum[static_cast<std::size_t>(k)] / static_cast<double>(c)
                       : 0.5 * (s.lo + s.hi);
    s.reactive_kvar = c > 0 ? q_sum[static_cast<std::size_t>(k)] / static_cast<double>(c) : 0.0;
  }
  return StateSpace(std::move(levels));
}

// Maps every sample of `traj` into a state index of `ss`. Throws if a sample
// falls outside the discretized range.
inline std::vector<int> state_sequence(const Trajectory& traj, const StateSpace& ss) {
  std::vector<int> seq(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const int k = ss.bin_index(traj.active_kw[i]);
    if (k < 0)
      throw input_error("state_sequence: sample " + std::to_string(i) +
                        " outside the state-space range");
    seq[i] = k;
  }
  return seq;
}

// Transition counts normalized per origin column. Origins never departed
// from get a self-loop so the column still sums to one. `skip` marks step
// indices i whose pair (i, i+1) must not be counted (gaps in the recording).
inline TransitionMatrix estimate_transitions_from_states(std::span<const int> states, int n,
                                                         std::span<const std::size_t> skip = {}) {
  if (states.empty()) throw input_error("estimate_transitions: empty state sequence");
  if (n < 1) throw input_error("estimate_transitions: need at least one state");
  for (const int s : states)
    if (s < 0 || s >= n) throw input_error("estimate_transitions: state index out of range");

  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
  std::size_t next_skip = 0;
  for (std::size_t i = 0; i + 1 < states.size(); ++i) {
    while (next_skip < skip.size() && skip[next_skip] < i) ++next_skip;
    if (next_skip < skip.size() && skip[next_skip] == i) continue;
    counts(states[i + 1], states[i]) += 1.0;
  }
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int b = 0; b < n; ++b) {
    const double departures = counts.col(b).sum();
    if (departures > 0.0)
      p.col(b) = counts.col(b) / departures;
    else
      p(b, b) = 1.0;
  }
  return TransitionMatrix(std::move(p));
}

inline TransitionMatrix estimate_transitions(const Trajectory& traj, const StateSpace& ss) {
  const std::vector<int> seq = state_sequence(traj, ss);
  return estimate_transitions_from_states(seq, ss.size(), traj.gap_indices);
}

// Samples a length-T state sequence (the start state is the first element).
inline std::vector<int> simulate(const TransitionMatrix& p, int start_state, std::size_t steps,
                                 std::uint64_t seed) {
  if (start_state < 0 || start_state >= p.size())
    throw input_error("simulate: start state out of range");
  if (steps == 0) return {};
  std::mt19937_64 rng(seed);
  std::vector<int> seq(steps);
  seq[0] = start_state;
  for (std::size_t i = 1; i < steps; ++i) {
    const double u = uniform01(rng);
    const int b = seq[i - 1];
    double acc = 0.0;
    int next = p.size() - 1;
    for (int a = 0; a < p.size(); ++a) {
      acc += p(a, b);
      if (u < acc) {
        next = a;
        break;
      }
    }
    seq[i] = next;
  }
  return seq;
}

struct StationaryResult {
  Eigen::VectorXd distribution;
  bool unique = false;  // false when the chain is reducible or periodic
  int iterations = 0;
};

// Plain power iteration rho <- P rho, tolerance 1e-10 in L1, capped at 1e5
// iterations. Non-convergence (periodic chains) or a rank-deficient I - P
// (reducible chains) is reported as non-unique. The start vector is skewed
// so that symmetric fixed points cannot mask a periodic chain.
inline StationaryResult stationary_distribution(const TransitionMatrix& p) {
  const int n = p.size();
  StationaryResult out;
  Eigen::VectorXd rho(n);
  for (int i = 0; i < n; ++i) rho(i) = 1.0 + static_cast<double>(i + 1) / n;
  rho /= rho.sum();
  constexpr int kMaxIter = 100000;
  constexpr double kTol = 1e-10;
  bool converged = false;
  for (int it = 0; it < kMaxIter; ++it) {
    Eigen::VectorXd next = p.matrix() * rho;
    next /= next.sum();
    const double diff = (next - rho).lpNorm<1>();
    rho = next;
    out.iterations = it + 1;
    if (diff <= kTol) {
      converged = true;
      break;
    }
  }
  out.distribution = rho;
  if (!converged) {
    out.unique = false;
    return out;
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - p.matrix();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  lu.setThreshold(1e-9);
  out.unique = lu.rank() == n - 1;
  return out;
}

struct ValidationReport {
  Eigen::VectorXd occupancy;            // empirical state-visit frequencies
  Eigen::VectorXd departures;           // transition departures per origin column
  std::optional<Eigen::VectorXd> stationary;
  std::optional<double> tv_distance;    // total variation, omitted when non-unique
  bool stationary_unique = false;
};

// Compares the empirical occupancy of `traj` (binned by `ss`) against the
// stationary distribution of `p`.
inline ValidationReport validate(const TransitionMatrix& p, const Trajectory& traj,
                                 const StateSpace& ss) {
  if (p.size() != ss.size())
    throw input_error("validate: matrix and state space sizes differ");
  const std::vector<int> seq = state_sequence(traj, ss);
  const int n = p.size();
  ValidationReport rep;
  rep.occupancy = Eigen::VectorXd::Zero(n);
  rep.departures = Eigen::VectorXd::Zero(n);
  for (const int s : seq) rep.occupancy(s) += 1.0;
  rep.occupancy /= static_cast<double>(seq.size());
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) rep.departures(seq[i]) += 1.0;

  const StationaryResult st = stationary_distribution(p);
  rep.stationary_unique = st.unique;
  if (st.unique) {
    rep.stationary = st.distribution;
    rep.tv_distance = 0.5 * (st.distribution - rep.occupancy).lpNorm<1>();
  }
  return rep;
}

}  // namespace enskit::markov
