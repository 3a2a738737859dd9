#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "enskit/common.hpp"
#include "enskit/lsmdp.hpp"
#include "enskit/markov.hpp"
#include "enskit/uncertainty.hpp"

// Model-free estimation of the desirability from passively observed
// transitions: each observed jump (t, b -> a) relaxes z_hat(t, b) toward
// exp(U(t, b)/gamma) * z_hat(t+1, a) with a Robbins-Monro step. No estimate
// of the transition matrix itself is needed.

namespace enskit::zlearning {

// Step rule eta_k = c / (c + k) with a per-entry visit counter k. The
// constant trades early bias against late variance: large c forgets the
// unit initialization fast but keeps averaging weak. c = 2 reaches the
// 5-state benchmark accuracy within 1e5 samples; c = 100 demonstrably does
// not, so the smaller constant is the default.
struct LearningSchedule {
  double c = 2.0;
  std::int64_t max_samples = 0;  // 0 = consume the whole stream
  double tolerance = 0.0;    // optional early stop on relative update size
  std::optional<double> fixed_eta;  // overrides the decaying rule when set

  void validate() const {
    if (c <= 0.0) throw input_error("LearningSchedule: c must be positive");
    if (tolerance < 0.0) throw input_error("LearningSchedule: tolerance must be nonnegative");
    if (fixed_eta && (*fixed_eta < 0.0 || *fixed_eta > 1.0))
      throw input_error("LearningSchedule: fixed_eta must be in [0,1]");
  }
};

struct TransitionSample {
  int t = 0;       // step index within the horizon
  int origin = 0;  // state departed from
  int next = 0;    // state arrived in
};

// Single-writer learner; readers may snapshot z_hat() between updates.
// Each (t, state) entry keeps its own visit counter so rarely visited
// entries still take large early steps.
class ZLearner {
 public:
  ZLearner(lsmdp::UtilitySchedule sched, LearningSchedule lsched)
      : sched_(std::move(sched)), lsched_(lsched) {
    sched_.validate();
    lsched_.validate();
    z_ = Eigen::MatrixXd::Ones(sched_.horizon() + 1, sched_.states());
    visits_ = Eigen::MatrixXi::Zero(sched_.horizon(), sched_.states());
  }

  int horizon() const { return sched_.horizon(); }
  int states() const { return sched_.states(); }

  // Applies one observed transition; out-of-range samples are counted and
  // ignored. Returns the relative change of the touched entry (0 when
  // rejected).
  double update(const TransitionSample& s) {
    if (s.t < 0 || s.t >= horizon() || s.origin < 0 || s.origin >= states() || s.next < 0 ||
        s.next >= states()) {
      ++rejected_;
      return 0.0;
    }
    const int k = ++visits_(s.t, s.origin);
    const double eta =
        lsched_.fixed_eta ? *lsched_.fixed_eta : lsched_.c / (lsched_.c + static_cast<double>(k));
    const double target =
        std::exp(sched_.reward(s.t, s.origin) / sched_.gamma) * z_(s.t + 1, s.next);
    const double before = z_(s.t, s.origin);
    z_(s.t, s.origin) = (1.0 - eta) * before + eta * target;
    ++accepted_;
    return std::fabs(z_(s.t, s.origin) - before) / before;
  }

  const Eigen::MatrixXd& z_hat() const { return z_; }
  std::int64_t rejected() const { return rejected_; }
  std::int64_t accepted() const { return accepted_; }

  lsmdp::Desirability desirability() const {
    return lsmdp::Desirability(z_.array().log().matrix(), sched_.gamma);
  }

  lsmdp::Policy induced_policy(const markov::TransitionMatrix& default_matrix) const {
    return lsmdp::policy_from_desirability(default_matrix.matrix(), desirability());
  }

 private:
  lsmdp::UtilitySchedule sched_;
  LearningSchedule lsched_;
  Eigen::MatrixXd z_;      // (T+1 x n); row T stays pinned at one
  Eigen::MatrixXi visits_;
  std::int64_t rejected_ = 0;
  std::int64_t accepted_ = 0;
};

// Passive trajectories under the default matrix, chopped into per-step
// samples. Start states cycle uniformly through the state space; with
// explore_epsilon > 0 a uniformly random next state is taken with that
// probability (the samples then come from the mixed chain, not the default
// one).
inline std::vector<TransitionSample> make_passive_samples(
    const markov::TransitionMatrix& default_matrix, int horizon, std::int64_t count,
    std::uint64_t seed, double explore_epsilon = 0.0) {
  if (horizon < 1) throw input_error("make_passive_samples: horizon must be positive");
  if (explore_epsilon < 0.0 || explore_epsilon > 1.0)
    throw input_error("make_passive_samples: epsilon must be in [0,1]");
  std::mt19937_64 rng(seed);
  const int n = default_matrix.size();
  std::vector<TransitionSample> out;
  out.reserve(static_cast<std::size_t>(count));
  int state = 0;
  int t = horizon;  // force a restart on the first iteration
  std::int64_t trajectory_index = 0;
  while (static_cast<std::int64_t>(out.size()) < count) {
    if (t >= horizon) {
      state = static_cast<int>(trajectory_index++ % n);
      t = 0;
    }
    int next;
    if (explore_epsilon > 0.0 && uniform01(rng) < explore_epsilon) {
      next = static_cast<int>(uniform01(rng) * n);
      next = std::min(next, n - 1);
    } else {
      const double u = uniform01(rng);
      double acc = 0.0;
      next = n - 1;
      for (int a = 0; a < n; ++a) {
        acc += default_matrix(a, state);
        if (u < acc) {
          next = a;
          break;
        }
      }
    }
    out.push_back({t, state, next});
    state = next;
    ++t;
  }
  return out;
}

struct ZLearnResult {
  lsmdp::Desirability z_hat;
  lsmdp::Policy policy;
  std::int64_t rejected = 0;
  std::int64_t consumed = 0;
};

// Runs the learner over a sample stream and returns the estimate together
// with the policy it induces through the standard closed form. When the
// schedule sets a tolerance, learning stops once every recent update moved
// its entry by less than that relative amount.
inline ZLearnResult z_learn(std::span<const TransitionSample> samples,
                            const lsmdp::UtilitySchedule& sched, const LearningSchedule& lsched,
                            const markov::TransitionMatrix& default_matrix) {
  ZLearner learner(sched, lsched);
  const std::int64_t cap = lsched.max_samples > 0
                               ? std::min<std::int64_t>(lsched.max_samples,
                                                        static_cast<std::int64_t>(samples.size()))
                               : static_cast<std::int64_t>(samples.size());
  const std::int64_t quiet_window =
      5LL * static_cast<std::int64_t>(sched.horizon()) * sched.states();
  std::int64_t quiet = 0;
  std::int64_t consumed = 0;
  for (; consumed < cap; ++consumed) {
    const double change = learner.update(samples[static_cast<std::size_t>(consumed)]);
    if (lsched.tolerance > 0.0) {
      quiet = change <= lsched.tolerance ? quiet + 1 : 0;
      if (quiet >= quiet_window) {
        ++consumed;
        break;
      }
    }
  }
  return {learner.desirability(), learner.induced_policy(default_matrix), learner.rejected(),
          consumed};
}

// Applies the robust closed form with a learned desirability in place of the
// exact one.
inline lsmdp::Policy robustify_learned(const lsmdp::Desirability& z_hat,
                                       const uncertainty::AmbiguitySet& amb) {
  return uncertainty::robust_policy(amb, z_hat);
}

}  // namespace enskit::zlearning
