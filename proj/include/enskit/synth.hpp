#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "enskit/common.hpp"
#include "enskit/markov.hpp"

// Synthetic ensemble trajectories from a first-order equivalent-thermal-
// parameter model: each unit is an RC node driven by the outdoor
// temperature, heated or cooled by a fixed-power device under thermostat
// hysteresis. The aggregate consumption feeds the same pipeline as metered
// data.

namespace enskit::synth {

struct TclModel {
  double thermal_resistance = 2.0;   // deg C per kW of continuous loss
  double thermal_capacitance = 2.0;  // kWh per deg C
  double rated_kw = 5.0;             // electrical draw while running
  double cop = 2.5;                  // thermal output per electrical kW
  double setpoint_c = 20.0;
  double deadband_c = 0.5;           // half width of the hysteresis band
  double reactive_factor = 0.0;      // kVAr per kW while running
  enum class Mode { heating, cooling } mode = Mode::heating;

  void validate() const {
    if (thermal_resistance <= 0.0 || thermal_capacitance <= 0.0 || rated_kw <= 0.0 ||
        deadband_c <= 0.0 || cop <= 0.0)
      throw input_error("TclModel: R, C, P, COP and deadband must be positive");
  }
};

struct WeatherSeries {
  Eigen::VectorXd outdoor_c;  // one entry per simulation step
  Eigen::VectorXd solar_kw;   // optional extra thermal gain; empty = none
  double period_s = 0.0;
};

// Jittered copies of a prototype unit: R, C and P vary uniformly by
// +-spread, which is what makes the ensemble's Markov matrix non-trivial.
inline std::vector<TclModel> make_ensemble(const TclModel& base, int count, std::uint64_t seed,
                                           double spread = 0.10) {
  base.validate();
  if (count < 1) throw input_error("make_ensemble: need at least one unit");
  if (spread < 0.0 || spread >= 1.0) throw input_error("make_ensemble: spread must be in [0,1)");
  std::mt19937_64 rng(seed);
  std::vector<TclModel> units(static_cast<std::size_t>(count), base);
  for (auto& u : units) {
    u.thermal_resistance *= 1.0 + uniform_in(rng, -spread, spread);
    u.thermal_capacitance *= 1.0 + uniform_in(rng, -spread, spread);
    u.rated_kw *= 1.0 + uniform_in(rng, -spread, spread);
  }
  return units;
}

struct EnsembleSim {
  markov::Trajectory aggregate;
  Eigen::MatrixXd temperatures;  // (units x steps); empty when not kept
};

struct SimOptions {
  std::int64_t start_time_s = 0;
  bool keep_temperatures = true;
  // Overrides for the seeded random initial conditions.
  std::optional<Eigen::VectorXd> initial_temperature_c;
  std::optional<std::vector<int>> initial_on;
};

// Euler integration of T' = -(T - T_out)/(RC) + s * sign * COP * P / C with
// thermostat switching at the deadband edges. The step must be fine enough
// that no single step can jump across the band.
inline EnsembleSim simulate_ensemble(const std::vector<TclModel>& models,
                                     const WeatherSeries& weather, int steps, double dt_s,
                                     std::uint64_t seed, const SimOptions& opts = {}) {
  if (models.empty()) throw input_error("simulate_ensemble: no units");
  if (steps < 2) throw input_error("simulate_ensemble: need at least two steps");
  if (dt_s <= 0.0) throw input_error("simulate_ensemble: dt must be positive");
  if (weather.outdoor_c.size() < steps)
    throw input_error("simulate_ensemble: weather series shorter than the horizon");
  if (weather.solar_kw.size() != 0 && weather.solar_kw.size() < steps)
    throw input_error("simulate_ensemble: solar series shorter than the horizon");
  const double dt_h = dt_s / 3600.0;

  const double t_out_min = weather.outdoor_c.head(steps).minCoeff();
  const double t_out_max = weather.outdoor_c.head(steps).maxCoeff();
  for (const auto& u : models) {
    u.validate();
    const double rc = u.thermal_resistance * u.thermal_capacitance;  // hours
    const double span = std::max(std::fabs(u.setpoint_c + u.deadband_c - t_out_min),
                                 std::fabs(u.setpoint_c - u.deadband_c - t_out_max));
    const double rate = span / rc + u.cop * u.rated_kw / u.thermal_capacitance;
    if (dt_h * rate >= u.deadband_c) {
      const double suggested = 0.5 * u.deadband_c / rate * 3600.0;
      throw input_error("simulate_ensemble: dt too coarse for the deadband; use dt <= " +
                        std::to_string(suggested) + " s");
    }
  }

  std::mt19937_64 rng(seed);
  const auto n_units = static_cast<int>(models.size());
  Eigen::VectorXd temp(n_units);
  std::vector<int> on(static_cast<std::size_t>(n_units));
  for (int k = 0; k < n_units; ++k) {
    const auto& u = models[static_cast<std::size_t>(k)];
    temp(k) = opts.initial_temperature_c
                  ? (*opts.initial_temperature_c)(k)
                  : uniform_in(rng, u.setpoint_c - u.deadband_c, u.setpoint_c + u.deadband_c);
    on[static_cast<std::size_t>(k)] =
        opts.initial_on ? (*opts.initial_on)[static_cast<std::size_t>(k)] : (uniform01(rng) < 0.5);
  }

  EnsembleSim sim;
  if (opts.keep_temperatures) sim.temperatures.resize(n_units, steps);
  std::vector<std::int64_t> times(static_cast<std::size_t>(steps));
  std::vector<double> power(static_cast<std::size_t>(steps));
  std::vector<double> reactive(static_cast<std::size_t>(steps), 0.0);
  bool any_reactive = false;

  for (int i = 0; i < steps; ++i) {
    const double t_out = weather.outdoor_c(i);
    const double solar = weather.solar_kw.size() ? weather.solar_kw(i) : 0.0;
    double agg_p = 0.0;
    double agg_q = 0.0;
    for (int k = 0; k < n_units; ++k) {
      const auto& u = models[static_cast<std::size_t>(k)];
      auto& s = on[static_cast<std::size_t>(k)];
      if (u.mode == TclModel::Mode::heating) {
        if (temp(k) <= u.setpoint_c - u.deadband_c) s = 1;
        if (temp(k) >= u.setpoint_c + u.deadband_c) s = 0;
      } else {
        if (temp(k) >= u.setpoint_c + u.deadband_c) s = 1;
        if (temp(k) <= u.setpoint_c - u.deadband_c) s = 0;
      }
      agg_p += s * u.rated_kw;
      agg_q += s * u.rated_kw * u.reactive_factor;
      if (u.reactive_factor != 0.0) any_reactive = true;
      if (opts.keep_temperatures) sim.temperatures(k, i) = temp(k);
      const double sign = u.mode == TclModel::Mode::heating ? 1.0 : -1.0;
      temp(k) += dt_h * (-(temp(k) - t_out) / (u.thermal_resistance * u.thermal_capacitance) +
                         sign * s * u.cop * u.rated_kw / u.thermal_capacitance +
                         solar / u.thermal_capacitance);
    }
    times[static_cast<std::size_t>(i)] = opts.start_time_s + static_cast<std::int64_t>(i) *
                                                                 static_cast<std::int64_t>(dt_s);
    power[static_cast<std::size_t>(i)] = agg_p;
    reactive[static_cast<std::size_t>(i)] = agg_q;
  }

  sim.aggregate = markov::make_trajectory(std::move(times), std::move(power),
                                          any_reactive ? std::move(reactive)
                                                       : std::vector<double>{});
  return sim;
}

}  // namespace enskit::synth
