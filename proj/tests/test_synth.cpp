#include <catch2/catch_amalgamated.hpp>

#include "enskit/markov.hpp"
#include "enskit/synth.hpp"

using namespace enskit;
using namespace enskit::synth;

namespace {

WeatherSeries constant_weather(double degc, int steps, double dt_s) {
  WeatherSeries w;
  w.outdoor_c = Eigen::VectorXd::Constant(steps, degc);
  w.period_s = dt_s;
  return w;
}

TclModel idle_heater() {
  TclModel m;
  m.thermal_resistance = 2.0;   // degC/kW
  m.thermal_capacitance = 2.5;  // kWh/degC -> RC = 5 h
  m.rated_kw = 4.0;
  m.cop = 3.0;
  m.setpoint_c = 20.0;
  m.deadband_c = 1e9;  // never switches
  m.mode = TclModel::Mode::heating;
  return m;
}

}  // namespace

TEST_CASE("free cooling decays toward the outdoor temperature") {
  // With the device off the model is a pure RC decay; Richardson
  // extrapolation of the Euler results at dt and dt/2 must land on the
  // analytic exponential.
  const auto unit = idle_heater();
  const double rc_h = unit.thermal_resistance * unit.thermal_capacitance;
  const double t_out = 5.0;
  const double t0 = 20.0;
  const double horizon_h = 2.0;

  auto final_temp = [&](double dt_s) {
    const int steps = static_cast<int>(horizon_h * 3600.0 / dt_s) + 1;
    SimOptions opts;
    opts.initial_temperature_c = Eigen::VectorXd::Constant(1, t0);
    opts.initial_on = std::vector<int>{0};
    const auto sim =
        simulate_ensemble({unit}, constant_weather(t_out, steps, dt_s), steps, dt_s, 1, opts);
    return sim.temperatures(0, steps - 1);
  };
  // Temperatures are recorded before each step, so entry steps-1 has seen
  // exactly (steps-1) * dt = horizon_h hours of integration.
  const double coarse = final_temp(2.0);
  const double fine = final_temp(1.0);
  const double extrapolated = 2.0 * fine - coarse;
  const double exact = t_out + (t0 - t_out) * std::exp(-horizon_h / rc_h);
  CHECK(std::fabs(extrapolated - exact) <= 1e-6 * std::fabs(t0 - t_out));
}

TEST_CASE("an infinitely wide deadband never switches") {
  auto unit = idle_heater();
  const int steps = 500;
  SimOptions opts;
  opts.initial_temperature_c = Eigen::VectorXd::Constant(1, 20.0);
  opts.initial_on = std::vector<int>{1};
  const auto sim = simulate_ensemble({unit}, constant_weather(5.0, steps, 60.0), steps, 60.0, 1,
                                     opts);
  for (std::size_t i = 0; i < sim.aggregate.size(); ++i)
    CHECK(sim.aggregate.active_kw[i] == Catch::Approx(unit.rated_kw));
}

TEST_CASE("steady-state duty cycle matches the heat balance") {
  TclModel proto;
  proto.thermal_resistance = 2.0;
  proto.thermal_capacitance = 2.0;
  proto.rated_kw = 5.0;
  proto.cop = 2.5;
  proto.setpoint_c = 20.0;
  proto.deadband_c = 0.5;
  proto.mode = TclModel::Mode::heating;
  const double t_out = 0.0;
  // analytic on-fraction: (Tset - Tout) / (R * cop * P)
  const double duty = (proto.setpoint_c - t_out) / (proto.thermal_resistance * proto.cop *
                                                    proto.rated_kw);
  REQUIRE(duty > 0.1);
  REQUIRE(duty < 0.9);

  const int units = 1000;
  const int steps = 6000;
  const double dt_s = 30.0;
  const auto fleet = make_ensemble(proto, units, 7, 0.0);  // homogeneous
  const auto sim = simulate_ensemble(fleet, constant_weather(t_out, steps, dt_s), steps, dt_s, 9);
  // discard the first quarter as transient
  double mean = 0.0;
  int count = 0;
  for (std::size_t i = steps / 4; i < sim.aggregate.size(); ++i) {
    mean += sim.aggregate.active_kw[i];
    ++count;
  }
  mean /= count;
  const double measured_duty = mean / (units * proto.rated_kw);
  CHECK(std::fabs(measured_duty - duty) / duty <= 0.02);
}

TEST_CASE("aggregate power stays within the fleet rating") {
  TclModel proto;
  proto.deadband_c = 0.5;
  const auto fleet = make_ensemble(proto, 50, 3, 0.1);
  double total = 0.0;
  for (const auto& u : fleet) total += u.rated_kw;
  const int steps = 2000;
  const auto sim = simulate_ensemble(fleet, constant_weather(8.0, steps, 30.0), steps, 30.0, 4);
  for (const double p : sim.aggregate.active_kw) {
    CHECK(p >= 0.0);
    CHECK(p <= total + 1e-9);
  }
}

TEST_CASE("slow sampling relative to the deadband is rejected with a hint") {
  TclModel proto;
  proto.deadband_c = 0.01;
  CHECK_THROWS_WITH(
      simulate_ensemble({proto}, constant_weather(0.0, 100, 3600.0), 100, 3600.0, 1),
      Catch::Matchers::ContainsSubstring("dt too coarse"));
}

TEST_CASE("aggregate trajectories produce diagonally dominant matrices at fine steps") {
  // With dt much smaller than RC the ensemble moves slowly through the
  // power states, so the estimated matrix concentrates near the diagonal.
  TclModel proto;
  proto.thermal_resistance = 2.0;
  proto.thermal_capacitance = 2.0;
  proto.rated_kw = 5.0;
  proto.cop = 2.5;
  proto.setpoint_c = 20.0;
  proto.deadband_c = 0.5;
  const auto fleet = make_ensemble(proto, 200, 11, 0.1);
  const int steps = 20000;
  const auto sim = simulate_ensemble(fleet, constant_weather(5.0, steps, 15.0), steps, 15.0, 13);
  const auto ss = markov::discretize(sim.aggregate, 6, markov::BinningScheme::uniform);
  const auto p = markov::estimate_transitions(sim.aggregate, ss);
  double diag = 0.0;
  for (int i = 0; i < p.size(); ++i) diag += p(i, i);
  CHECK(diag / p.size() > 0.5);  // mass sits on the diagonal
}

TEST_CASE("same seed reproduces the simulation exactly") {
  TclModel proto;
  proto.deadband_c = 0.5;
  const auto fleet = make_ensemble(proto, 20, 5, 0.1);
  const auto a = simulate_ensemble(fleet, constant_weather(5.0, 300, 60.0), 300, 60.0, 21);
  const auto b = simulate_ensemble(fleet, constant_weather(5.0, 300, 60.0), 300, 60.0, 21);
  CHECK(a.aggregate.active_kw == b.aggregate.active_kw);
}
