#include <catch2/catch_amalgamated.hpp>

#include "cosim_fixture.hpp"
#include "enskit/coordinator.hpp"
#include "helpers.hpp"

using namespace enskit;
using namespace enskit::coordinator;

TEST_CASE("zero multipliers reproduce the standalone solve") {
  const auto fx = testutil::make_cosim_fixture(10.0, 0.01, 1e-6, 50);
  const auto& spec = fx.config.ensembles.front();
  const DualState dual = DualState::zeros(2, 2);
  const auto buses = mdp_step(fx.config, dual);

  lsmdp::UtilitySchedule sched{spec.base_reward, spec.gamma};
  const auto standalone = lsmdp::solve_backward(spec.default_matrix, sched);
  for (int t = 0; t < 2; ++t)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        CHECK(buses[0].solution.policy.step(t)(a, b) ==
              Catch::Approx(standalone.policy.step(t)(a, b)).margin(1e-14));
}

TEST_CASE("a positive price on power lowers expected consumption") {
  const auto fx = testutil::make_cosim_fixture(10.0, 0.01, 1e-6, 50);
  const auto at_zero = mdp_step(fx.config, DualState::zeros(2, 2));
  DualState priced = DualState::zeros(2, 2);
  priced.lambda_p.col(1).setConstant(0.3);  // bus B column
  const auto at_price = mdp_step(fx.config, priced);
  for (int t = 0; t < 2; ++t) CHECK(at_price[0].p_kw(t) < at_zero[0].p_kw(t) - 1e-6);
}

TEST_CASE("zero rated reactive power makes the reactive terms inert") {
  const auto fx = testutil::make_cosim_fixture(10.0, 0.01, 1e-6, 50);
  const auto plain = mdp_step(fx.config, DualState::zeros(2, 2));
  DualState with_q = DualState::zeros(2, 2);
  with_q.lambda_q.col(1).setConstant(5.0);
  const auto shifted = mdp_step(fx.config, with_q);
  for (int t = 0; t < 2; ++t) {
    CHECK(shifted[0].p_kw(t) == Catch::Approx(plain[0].p_kw(t)).margin(1e-13));
    CHECK(shifted[0].q_kvar(t) == 0.0);
  }
}

TEST_CASE("dual update moves a multiplier by delta times the mismatch") {
  const auto fx = testutil::make_cosim_fixture(10.0, 0.1, 1e-6, 50);
  DualState dual = DualState::zeros(2, 2);
  Eigen::MatrixXd p_mdp = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd p_opf = Eigen::MatrixXd::Zero(2, 2);
  p_mdp(1, 1) = 5.0;  // +1 kW mismatch at (t=1, bus B)
  p_opf(1, 1) = 4.0;
  const auto next = dual_update(dual, fx.config, p_mdp, Eigen::MatrixXd::Zero(2, 2), p_opf,
                                Eigen::MatrixXd::Zero(2, 2), 0.1);
  CHECK(next.lambda_p(1, 1) == Catch::Approx(0.1).margin(1e-15));
  CHECK(next.lambda_p(0, 1) == 0.0);
  CHECK(next.iteration == 2);
}

TEST_CASE("alternating mismatches oscillate with amplitude delta times mismatch") {
  const auto fx = testutil::make_cosim_fixture(10.0, 0.1, 1e-6, 50);
  DualState dual = DualState::zeros(2, 2);
  Eigen::MatrixXd plus = Eigen::MatrixXd::Zero(2, 2);
  plus(0, 1) = 2.0;
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 2);
  const auto up = dual_update(dual, fx.config, plus, zero, zero, zero, 0.1);
  CHECK(up.lambda_p(0, 1) == Catch::Approx(0.2));
  const auto down = dual_update(up, fx.config, zero, zero, plus, zero, 0.1);
  CHECK(down.lambda_p(0, 1) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("zero step size freezes multipliers and dispatch") {
  auto fx = testutil::make_cosim_fixture(10.0, 0.0, 1e-9, 3);
  const auto report = run(fx.config);
  // The multipliers never move, but the schedules still disagree, so this
  // must not be declared converged.
  CHECK_FALSE(report.converged);
  CHECK(report.iterations == 3);
  CHECK(report.dual.lambda_p.lpNorm<Eigen::Infinity>() == 0.0);
  for (std::size_t i = 1; i < report.trace.size(); ++i) {
    CHECK(report.trace[i].lambda_change == 0.0);
    CHECK(report.trace[i].primal_residual == Catch::Approx(report.trace[0].primal_residual));
    CHECK(report.trace[i].mdp_objective == Catch::Approx(report.trace[0].mdp_objective));
    CHECK(report.trace[i].opf_objective == Catch::Approx(report.trace[0].opf_objective));
  }
}

TEST_CASE("non-binding network with zero tariff returns the standalone dispatch") {
  auto fx = testutil::make_cosim_fixture(0.0, 0.05, 1e-8, 100);
  const auto report = run(fx.config);
  REQUIRE(report.converged);

  const auto& spec = fx.config.ensembles.front();
  lsmdp::UtilitySchedule sched{spec.base_reward, spec.gamma};
  const auto standalone = lsmdp::solve_backward(spec.default_matrix, sched);
  const auto dist = lsmdp::propagate(spec.rho0, standalone.policy);
  for (int t = 0; t < 2; ++t) {
    const double p_standalone = dist.rho.row(t + 1).dot(fx.rated_power);
    CHECK(std::fabs(report.p_mdp(t, 1) - p_standalone) <= 1e-9);
    CHECK(std::fabs(report.p_mdp(t, 1) - report.p_opf(t, 1)) <= 1e-6);
  }
  CHECK(report.dual.lambda_p.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("dual objective is nondecreasing for a small step") {
  auto fx = testutil::make_cosim_fixture(10.0, 0.01, 1e-7, 400);
  const auto report = run(fx.config);
  REQUIRE(report.trace.size() >= 3);
  for (std::size_t i = 1; i < report.trace.size(); ++i)
    CHECK(report.trace[i].dual_objective >= report.trace[i - 1].dual_objective - 1e-9);
}

TEST_CASE("consensus residual is bounded by the stopping rule") {
  // tolerance = delta * 1e-4 certifies a primal residual of 1e-4 at the stop.
  auto fx = testutil::make_cosim_fixture(10.0, 0.01, 0.01 * 1e-4, 2000);
  const auto report = run(fx.config);
  REQUIRE(report.converged);
  CHECK(report.trace.back().primal_residual <= 1e-4);
}

TEST_CASE("converged objective matches the exhaustive-grid joint optimum") {
  auto fx = testutil::make_cosim_fixture(10.0, 0.01, 1e-7, 2000);
  const auto report = run(fx.config);
  REQUIRE(report.converged);

  // Primal value of the returned dispatch: aggregator cost at base utility
  // plus tariff-weighted losses.
  const auto& spec = fx.config.ensembles.front();
  lsmdp::UtilitySchedule base{spec.base_reward, spec.gamma};
  const double agg = lsmdp::objective_value(report.buses[0].solution.policy,
                                            report.buses[0].distribution, spec.default_matrix,
                                            base);
  double network = 0.0;
  for (int t = 0; t < 2; ++t) {
    const double consumption = report.p_mdp(t, 1) + fx.base_load_kw;
    network += fx.config.tariff(t) * fx.line_r * std::pow(consumption / fx.base_kva, 2) *
               fx.base_kva;
  }
  const double primal = agg + network;

  const auto brute = testutil::cosim_brute_force(fx, 32);
  CHECK(std::fabs(primal - brute.objective) <= 0.01 * std::fabs(brute.objective));
  // The brute-force optimum can only be better (up to grid resolution).
  CHECK(primal >= brute.objective - 1e-4);
}

TEST_CASE("robust and stochastic variants run through the loop") {
  for (const auto variant : {PolicyVariant::stochastic, PolicyVariant::robust}) {
    auto fx = testutil::make_cosim_fixture(10.0, 0.01, 1e-6, 500);
    fx.config.variant = variant;
    auto& spec = fx.config.ensembles.front();
    spec.sigma2 = 0.002;
    if (variant == PolicyVariant::robust)
      spec.ambiguity = uncertainty::ambiguity_bounds(spec.default_matrix.matrix(), 0.05, 10,
                                                     0.05, 0.05);
    const auto report = run(fx.config);
    CHECK(report.converged);
    for (const auto& s : report.trace) CHECK(std::isfinite(s.dual_objective));
  }
}

TEST_CASE("unknown ensemble bus is rejected") {
  auto fx = testutil::make_cosim_fixture(10.0, 0.01, 1e-6, 10);
  fx.config.ensembles.front().bus = "Z";
  CHECK_THROWS_AS(run(fx.config), input_error);
}
