#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "enskit/common.hpp"
#include "enskit/lsmdp.hpp"
#include "enskit/markov.hpp"

// Shared generators for randomized tests. Everything is seeded explicitly so
// test runs are reproducible.

namespace testutil {

// Column-stochastic matrix with entries bounded away from zero (ergodic).
inline enskit::markov::TransitionMatrix random_stochastic(int n, std::mt19937_64& rng,
                                                          double min_entry = 0.05) {
  Eigen::MatrixXd m(n, n);
  for (int b = 0; b < n; ++b) {
    double sum = 0.0;
    for (int a = 0; a < n; ++a) {
      m(a, b) = min_entry + enskit::uniform01(rng);
      sum += m(a, b);
    }
    m.col(b) /= sum;
  }
  return enskit::markov::TransitionMatrix(std::move(m));
}

inline Eigen::MatrixXd random_reward(int horizon, int n, std::mt19937_64& rng, double lo = -1.0,
                                     double hi = 1.0) {
  Eigen::MatrixXd u(horizon, n);
  for (int t = 0; t < horizon; ++t)
    for (int a = 0; a < n; ++a) u(t, a) = enskit::uniform_in(rng, lo, hi);
  return u;
}

inline Eigen::VectorXd random_distribution(int n, std::mt19937_64& rng) {
  Eigen::VectorXd v(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    v(i) = 0.05 + enskit::uniform01(rng);
    sum += v(i);
  }
  return v / sum;
}

// Mean KL divergence of the policy from the default columns, averaged over
// steps and origin states.
inline double mean_policy_kl(const enskit::lsmdp::Policy& policy,
                             const enskit::markov::TransitionMatrix& def) {
  double acc = 0.0;
  int cnt = 0;
  for (int t = 0; t < policy.horizon(); ++t) {
    for (int b = 0; b < def.size(); ++b) {
      double kl = 0.0;
      for (int a = 0; a < def.size(); ++a) {
        const double p = policy.step(t)(a, b);
        if (p > 0.0) kl += p * std::log(p / def(a, b));
      }
      acc += kl;
      ++cnt;
    }
  }
  return acc / cnt;
}

}  // namespace testutil
