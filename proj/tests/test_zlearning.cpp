#include <catch2/catch_amalgamated.hpp>

#include <array>

#include "enskit/zlearning.hpp"
#include "helpers.hpp"

using namespace enskit;
using namespace enskit::zlearning;

namespace {

double max_rel_error(const Eigen::MatrixXd& z_hat, const lsmdp::Desirability& ref) {
  double worst = 0.0;
  for (int t = 0; t < ref.horizon(); ++t) {
    const Eigen::VectorXd z = ref.z(t);
    for (int b = 0; b < ref.states(); ++b)
      worst = std::max(worst, std::fabs(z_hat(t, b) - z(b)) / z(b));
  }
  return worst;
}

}  // namespace

TEST_CASE("single-state chain with zero utility stays at one") {
  const markov::TransitionMatrix pbar(Eigen::MatrixXd::Ones(1, 1));
  lsmdp::UtilitySchedule sched{Eigen::MatrixXd::Zero(6, 1), 1.0};
  ZLearner learner(sched, {});
  for (int k = 0; k < 1000; ++k) learner.update({k % 6, 0, 0});
  CHECK((learner.z_hat().array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("zero utility makes the all-ones table a fixed point on any chain") {
  std::mt19937_64 rng(1);
  const auto pbar = testutil::random_stochastic(5, rng);
  lsmdp::UtilitySchedule sched{Eigen::MatrixXd::Zero(4, 5), 2.0};
  ZLearner learner(sched, {});
  const auto samples = make_passive_samples(pbar, 4, 20000, 7);
  for (const auto& s : samples) learner.update(s);
  CHECK((learner.z_hat().array() - 1.0).abs().maxCoeff() <= 1e-14);
}

TEST_CASE("out-of-range samples are rejected and counted") {
  lsmdp::UtilitySchedule sched{Eigen::MatrixXd::Zero(3, 2), 1.0};
  ZLearner learner(sched, {});
  CHECK(learner.update({3, 0, 0}) == 0.0);   // time out of range
  CHECK(learner.update({0, 2, 0}) == 0.0);   // origin out of range
  CHECK(learner.update({0, 0, -1}) == 0.0);  // next out of range
  CHECK(learner.rejected() == 3);
  CHECK(learner.accepted() == 0);
}

TEST_CASE("zero learning rate freezes the estimate") {
  std::mt19937_64 rng(2);
  const auto pbar = testutil::random_stochastic(3, rng);
  lsmdp::UtilitySchedule sched{testutil::random_reward(4, 3, rng), 1.0};
  LearningSchedule lsched;
  lsched.fixed_eta = 0.0;
  ZLearner learner(sched, lsched);
  for (const auto& s : make_passive_samples(pbar, 4, 5000, 3)) learner.update(s);
  CHECK((learner.z_hat().array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("the estimate stays strictly positive") {
  std::mt19937_64 rng(3);
  const auto pbar = testutil::random_stochastic(4, rng);
  lsmdp::UtilitySchedule sched{testutil::random_reward(6, 4, rng, -3.0, 3.0), 0.5};
  ZLearner learner(sched, {});
  for (const auto& s : make_passive_samples(pbar, 6, 50000, 11)) {
    learner.update(s);
  }
  CHECK((learner.z_hat().array() > 0.0).all());
}

TEST_CASE("learned desirability approaches the dynamic-programming solution") {
  // 5-state ergodic chain, T = 8, rewards in [-1, 1], gamma = 1.
  std::mt19937_64 rng(4);
  const auto pbar = testutil::random_stochastic(5, rng);
  lsmdp::UtilitySchedule sched{testutil::random_reward(8, 5, rng), 1.0};
  const auto ref = lsmdp::solve_backward_kernel(pbar.matrix(), sched);

  LearningSchedule lsched;
  ZLearner learner(sched, lsched);
  for (const auto& s : make_passive_samples(pbar, 8, 100000, 5)) learner.update(s);
  CHECK(max_rel_error(learner.z_hat(), ref) <= 0.05);
}

TEST_CASE("error declines across sample windows when averaged over seeds") {
  std::mt19937_64 rng(6);
  const auto pbar = testutil::random_stochastic(5, rng);
  lsmdp::UtilitySchedule sched{testutil::random_reward(8, 5, rng), 1.0};
  const auto ref = lsmdp::solve_backward_kernel(pbar.matrix(), sched);

  constexpr int kSeeds = 20;
  constexpr int kWindows = 6;
  constexpr std::int64_t kWindow = 10000;
  std::array<double, kWindows> mean_err{};
  for (int seed = 0; seed < kSeeds; ++seed) {
    ZLearner learner(sched, {});
    const auto samples = make_passive_samples(pbar, 8, kWindows * kWindow, 100 + seed);
    for (int w = 0; w < kWindows; ++w) {
      for (std::int64_t k = 0; k < kWindow; ++k)
        learner.update(samples[static_cast<std::size_t>(w * kWindow + k)]);
      mean_err[static_cast<std::size_t>(w)] += max_rel_error(learner.z_hat(), ref) / kSeeds;
    }
  }
  for (int w = 1; w < kWindows; ++w)
    CHECK(mean_err[static_cast<std::size_t>(w)] <=
          mean_err[static_cast<std::size_t>(w - 1)] + 1e-9);
}

TEST_CASE("z_learn returns the induced policy and respects the cap") {
  std::mt19937_64 rng(7);
  const auto pbar = testutil::random_stochastic(4, rng);
  lsmdp::UtilitySchedule sched{testutil::random_reward(5, 4, rng), 1.0};
  const auto samples = make_passive_samples(pbar, 5, 20000, 9);
  LearningSchedule lsched;
  lsched.max_samples = 5000;
  const auto result = z_learn(samples, sched, lsched, pbar);
  CHECK(result.consumed == 5000);
  CHECK(result.policy.horizon() == 5);
  for (int t = 0; t < 5; ++t)
    for (int b = 0; b < 4; ++b)
      CHECK(std::fabs(result.policy.step(t).matrix().col(b).sum() - 1.0) <= 1e-12);
}

TEST_CASE("robustifying a learned estimate with a collapsed set is the plain policy") {
  std::mt19937_64 rng(8);
  const auto pbar = testutil::random_stochastic(3, rng);
  lsmdp::UtilitySchedule sched{testutil::random_reward(4, 3, rng), 1.0};
  ZLearner learner(sched, {});
  for (const auto& s : make_passive_samples(pbar, 4, 30000, 10)) learner.update(s);

  const uncertainty::TransitionUncertainty unc{pbar, 0.0, {}};
  const auto robust = robustify_learned(learner.desirability(), uncertainty::collapsed_set(unc));
  const auto plain = learner.induced_policy(pbar);
  for (int t = 0; t < 4; ++t)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        CHECK(robust.step(t)(a, b) == Catch::Approx(plain.step(t)(a, b)).margin(1e-12));
}

TEST_CASE("exact desirability with a collapsed set reproduces the solver policy") {
  std::mt19937_64 rng(9);
  const auto pbar = testutil::random_stochastic(3, rng);
  lsmdp::UtilitySchedule sched{testutil::random_reward(4, 3, rng), 1.0};
  const auto sol = lsmdp::solve_backward(pbar, sched);
  const uncertainty::TransitionUncertainty unc{pbar, 0.0, {}};
  const auto robust = robustify_learned(sol.desirability, uncertainty::collapsed_set(unc));
  for (int t = 0; t < 4; ++t)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        CHECK(robust.step(t)(a, b) == Catch::Approx(sol.policy.step(t)(a, b)).margin(1e-12));
}

TEST_CASE("a widened ambiguity set moves the learned policy away from the default") {
  std::mt19937_64 rng(10);
  const auto pbar = testutil::random_stochastic(3, rng, 0.15);
  lsmdp::UtilitySchedule sched{testutil::random_reward(4, 3, rng), 1.0};
  ZLearner learner(sched, {});
  for (const auto& s : make_passive_samples(pbar, 4, 30000, 12)) learner.update(s);

  const auto amb = uncertainty::ambiguity_bounds(pbar.matrix(), 0.06, 6, 0.1, 0.1);
  const auto widened = robustify_learned(learner.desirability(), amb);
  const auto plain = learner.induced_policy(pbar);
  CHECK(testutil::mean_policy_kl(widened, pbar) > testutil::mean_policy_kl(plain, pbar));
}
