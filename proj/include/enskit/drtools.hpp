#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "enskit/common.hpp"
#include "enskit/markov.hpp"
#include "enskit/time.hpp"

// Demand-response accounting: the top-5-of-10 eligible-weekday baseline
// rule, the baseline / curtailment error metrics, and the linear
// price-response model the coordinator-side price proposals are built on.

namespace enskit::drtools {

struct DrEvent {
  std::int64_t day;        // midnight stamp of the event day (epoch seconds)
  int start_hour = 0;      // inclusive
  int end_hour = 0;        // exclusive
  double enrolled_kw = 0;  // promised curtailment

  void validate() const {
    if (start_hour < 0 || end_hour > 24 || start_hour >= end_hour)
      throw input_error("DrEvent: need 0 <= start < end <= 24");
    if (enrolled_kw < 0.0) throw input_error("DrEvent: enrollment must be nonnegative");
  }
};

struct CalendarRules {
  std::vector<std::int64_t> holidays;    // midnight day stamps
  std::vector<std::int64_t> event_days;  // other DR event days
  int low_usage_window = 30;             // trailing eligible days for the usage average
  double low_usage_fraction = 0.25;
  enum class Ranking { event_window, daily_total } ranking = Ranking::event_window;
};

struct Exclusions {
  int weekend = 0;
  int holiday = 0;
  int event_day = 0;
  int day_before = 0;
  int incomplete = 0;
  int low_usage = 0;

  std::string describe() const {
    return "weekend=" + std::to_string(weekend) + " holiday=" + std::to_string(holiday) +
           " event_day=" + std::to_string(event_day) + " day_before=" +
           std::to_string(day_before) + " incomplete=" + std::to_string(incomplete) +
           " low_usage=" + std::to_string(low_usage);
  }
};

struct BaselineResult {
  std::array<double, 24> baseline_kw{};  // hourly means over the top-5 days
  std::vector<std::int64_t> top_days;    // the 5 days averaged (day stamps)
  std::vector<std::int64_t> eligible_days;  // the 10 candidates considered
  Exclusions exclusions;
};

namespace detail {

// Hourly mean consumption per calendar day; a day only counts when all 24
// hours have samples.
inline std::map<std::int64_t, std::array<double, 24>> hourly_by_day(
    const markov::Trajectory& traj, std::map<std::int64_t, bool>* complete = nullptr) {
  std::map<std::int64_t, std::array<double, 24>> sums;
  std::map<std::int64_t, std::array<int, 24>> counts;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const std::int64_t day = time_util::day_stamp(traj.time_s[i]);
    const int h = time_util::hour_of_day(traj.time_s[i]);
    auto& s = sums[day];
    auto& c = counts[day];
    s[static_cast<std::size_t>(h)] += traj.active_kw[i];
    c[static_cast<std::size_t>(h)] += 1;
  }
  std::map<std::int64_t, std::array<double, 24>> out;
  for (auto& [day, s] : sums) {
    const auto& c = counts[day];
    bool full = true;
    std::array<double, 24> means{};
    for (int h = 0; h < 24; ++h) {
      if (c[static_cast<std::size_t>(h)] == 0) {
        full = false;
        break;
      }
      means[static_cast<std::size_t>(h)] =
          s[static_cast<std::size_t>(h)] / c[static_cast<std::size_t>(h)];
    }
    if (complete) (*complete)[day] = full;
    if (full) out[day] = means;
  }
  return out;
}

inline double window_mean(const std::array<double, 24>& hours, int lo, int hi) {
  double acc = 0.0;
  for (int h = lo; h < hi; ++h) acc += hours[static_cast<std::size_t>(h)];
  return acc / (hi - lo);
}

}  // namespace detail

// ConEd-style baseline: the hourly mean over the top-5 (by event-window
// usage) of the last 10 eligible weekdays, where weekends, holidays, other
// event days, the day immediately before the event, and low-usage days
// (below a fraction of the trailing average) are ineligible. Returns all 24
// hourly values; the event window picks out the ones that settle.
inline BaselineResult baseline(const markov::Trajectory& traj, const DrEvent& event,
                               const CalendarRules& rules) {
  event.validate();
  traj.validate();
  if (rules.low_usage_window < 1)
    throw input_error("CalendarRules: low-usage window must be positive");

  const auto daily = detail::hourly_by_day(traj);
  auto is_listed = [](const std::vector<std::int64_t>& days, std::int64_t d) {
    return std::find(days.begin(), days.end(), d) != days.end();
  };

  // Candidates, most recent first, before the low-usage filter.
  BaselineResult res;
  std::vector<std::int64_t> candidates;
  const int wanted = std::max(rules.low_usage_window, 10) + 30;
  for (std::int64_t day = event.day - time_util::kSecondsPerDay;
       static_cast<int>(candidates.size()) < wanted &&
       day > event.day - 400 * time_util::kSecondsPerDay;
       day -= time_util::kSecondsPerDay) {
    if (time_util::is_weekend(day)) {
      ++res.exclusions.weekend;
      continue;
    }
    if (day == event.day - time_util::kSecondsPerDay) {
      ++res.exclusions.day_before;
      continue;
    }
    if (is_listed(rules.holidays, day)) {
      ++res.exclusions.holiday;
      continue;
    }
    if (day == event.day || is_listed(rules.event_days, day)) {
      ++res.exclusions.event_day;
      continue;
    }
    const auto it = daily.find(day);
    if (it == daily.end()) {
      ++res.exclusions.incomplete;
      continue;
    }
    candidates.push_back(day);
  }

  if (candidates.empty())
    throw input_error("baseline: no eligible days before the event (" +
                      res.exclusions.describe() + ")");

  // Average usage level over the trailing window of eligible days, used by
  // the low-usage exclusion.
  double level = 0.0;
  const int window = std::min<int>(rules.low_usage_window, static_cast<int>(candidates.size()));
  for (int i = 0; i < window; ++i)
    level += detail::window_mean(daily.at(candidates[static_cast<std::size_t>(i)]), 0, 24);
  level /= window;

  for (const std::int64_t day : candidates) {
    if (static_cast<int>(res.eligible_days.size()) == 10) break;
    const double usage = detail::window_mean(daily.at(day), 0, 24);
    if (usage < rules.low_usage_fraction * level) {
      ++res.exclusions.low_usage;
      continue;
    }
    res.eligible_days.push_back(day);
  }
  if (res.eligible_days.size() < 10)
    throw input_error("baseline: fewer than 10 eligible weekdays (" +
                      res.exclusions.describe() + ")");

  // Top 5 by the configured ranking key; ties broken by recency (days are
  // kept most-recent-first, stable sort preserves that order).
  res.top_days = res.eligible_days;
  std::stable_sort(res.top_days.begin(), res.top_days.end(),
                   [&](std::int64_t a, std::int64_t b) {
                     const auto key = [&](std::int64_t d) {
                       return rules.ranking == CalendarRules::Ranking::event_window
                                  ? detail::window_mean(daily.at(d), event.start_hour,
                                                        event.end_hour)
                                  : detail::window_mean(daily.at(d), 0, 24);
                     };
                     return key(a) > key(b);
                   });
  res.top_days.resize(5);

  for (int h = 0; h < 24; ++h) {
    double acc = 0.0;
    for (const std::int64_t day : res.top_days)
      acc += daily.at(day)[static_cast<std::size_t>(h)];
    res.baseline_kw[static_cast<std::size_t>(h)] = acc / 5.0;
  }
  return res;
}

struct HourMetric {
  int hour = 0;
  double baseline_kw = 0.0;
  double realtime_kw = 0.0;
  std::optional<double> baseline_error_pct;  // empty when the denominator is zero
  bool in_event_window = false;
};

struct ErrorMetrics {
  std::vector<HourMetric> hours;                 // event-day hours with realtime data
  std::optional<double> mean_baseline_error_pct; // over non-flagged hours
  std::optional<double> curtailment_error_pct;   // empty when enrollment is zero
  double delivered_kw = 0.0;                     // mean curtailment over event hours
  int flagged_hours = 0;
};

// Baseline error per hour of the event day plus the delivered-vs-enrolled
// curtailment error over the event window. Hours with a zero denominator
// are flagged and left out of the aggregates.
inline ErrorMetrics error_metrics(const BaselineResult& base, const markov::Trajectory& realtime,
                                  const DrEvent& event) {
  event.validate();
  const auto daily = detail::hourly_by_day(realtime);
  const auto it = daily.find(event.day);
  if (it == daily.end())
    throw input_error("error_metrics: no complete real-time data for the event day");
  const auto& actual = it->second;

  ErrorMetrics m;
  double err_acc = 0.0;
  int err_cnt = 0;
  double delivered_acc = 0.0;
  for (int h = 0; h < 24; ++h) {
    HourMetric hm;
    hm.hour = h;
    hm.baseline_kw = base.baseline_kw[static_cast<std::size_t>(h)];
    hm.realtime_kw = actual[static_cast<std::size_t>(h)];
    hm.in_event_window = h >= event.start_hour && h < event.end_hour;
    if (hm.realtime_kw != 0.0) {
      hm.baseline_error_pct = (hm.baseline_kw - hm.realtime_kw) / hm.realtime_kw * 100.0;
      err_acc += *hm.baseline_error_pct;
      ++err_cnt;
    } else {
      ++m.flagged_hours;
    }
    if (hm.in_event_window) delivered_acc += hm.baseline_kw - hm.realtime_kw;
    m.hours.push_back(hm);
  }
  if (err_cnt > 0) m.mean_baseline_error_pct = err_acc / err_cnt;
  m.delivered_kw = delivered_acc / (event.end_hour - event.start_hour);
  if (event.enrolled_kw != 0.0)
    m.curtailment_error_pct = (m.delivered_kw - event.enrolled_kw) / event.enrolled_kw * 100.0;
  return m;
}

struct PriceResponseModel {
  double beta1 = 0.0;  // kW per $/kWh
  double beta0 = 0.0;  // kW
  double residual_norm = 0.0;
  double se_beta1 = 0.0;
  double se_beta0 = 0.0;
  int n_samples = 0;
};

// Ordinary least squares of x = beta1 * lambda + beta0 for one participant.
inline PriceResponseModel fit_price_response(
    std::span<const std::pair<double, double>> history) {
  const auto n = static_cast<int>(history.size());
  if (n < 2) throw input_error("fit_price_response: need at least two observations");
  double lmin = history[0].first, lmax = history[0].first;
  double lbar = 0.0, xbar = 0.0;
  for (const auto& [l, x] : history) {
    lmin = std::min(lmin, l);
    lmax = std::max(lmax, l);
    lbar += l;
    xbar += x;
  }
  if (lmin == lmax) throw input_error("price never varied");
  lbar /= n;
  xbar /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [l, x] : history) {
    sxx += (l - lbar) * (l - lbar);
    sxy += (l - lbar) * (x - xbar);
  }
  PriceResponseModel m;
  m.beta1 = sxy / sxx;
  m.beta0 = xbar - m.beta1 * lbar;
  m.n_samples = n;
  double rss = 0.0;
  for (const auto& [l, x] : history) {
    const double r = x - (m.beta1 * l + m.beta0);
    rss += r * r;
  }
  m.residual_norm = std::sqrt(rss);
  if (n > 2) {
    const double s2 = rss / (n - 2);
    m.se_beta1 = std::sqrt(s2 / sxx);
    m.se_beta0 = std::sqrt(s2 * (1.0 / n + lbar * lbar / sxx));
  }
  return m;
}

struct PriceProposal {
  double lambda = 0.0;
  bool shortfall = false;  // the cap cannot reach the target
  double predicted_kw = 0.0;
};

// Smallest nonnegative price whose predicted aggregate response covers the
// target, clamped to the cap; with probability epsilon the price is
// perturbed by +-20 percent for exploration.
inline PriceProposal propose_price(std::span<const PriceResponseModel> models, double target_kw,
                                   double exploration_epsilon, double price_cap,
                                   std::uint64_t seed) {
  if (models.empty()) throw input_error("propose_price: no fitted models");
  if (price_cap <= 0.0) throw input_error("propose_price: price cap must be positive");
  if (exploration_epsilon < 0.0 || exploration_epsilon > 1.0)
    throw input_error("propose_price: epsilon must be in [0,1]");
  double b1 = 0.0, b0 = 0.0;
  for (const auto& m : models) {
    b1 += m.beta1;
    b0 += m.beta0;
  }
  PriceProposal out;
  if (b0 >= target_kw) {
    out.lambda = 0.0;
  } else if (b1 <= 0.0) {
    out.lambda = price_cap;
    out.shortfall = true;
  } else {
    out.lambda = (target_kw - b0) / b1;
    if (out.lambda > price_cap) {
      out.lambda = price_cap;
      out.shortfall = true;
    }
  }
  if (exploration_epsilon > 0.0) {
    std::mt19937_64 rng(seed);
    if (uniform01(rng) < exploration_epsilon)
      out.lambda = std::clamp(out.lambda * (1.0 + uniform_in(rng, -0.2, 0.2)), 0.0, price_cap);
  }
  out.predicted_kw = b1 * out.lambda + b0;
  return out;
}

}  // namespace enskit::drtools
