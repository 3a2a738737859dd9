#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include "enskit/common.hpp"

// Regularized incomplete gamma/beta functions and the quantiles built on
// them (Student t, chi-square, standard normal). Quantiles are obtained by
// bisection on the CDF, which is monotone, so no external statistics
// dependency is needed.

namespace enskit::stats {

namespace detail {

// Lower regularized gamma P(a,x) by series expansion; valid for x < a+1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized gamma Q(a,x) by continued fraction (modified Lentz);
// valid for x >= a+1.
inline double gamma_q_contfrac(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-17) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_contfrac(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 1000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-17) break;
  }
  return h;
}

}  // namespace detail

// Lower regularized incomplete gamma P(a,x).
inline double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw input_error("gamma_p: need a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_contfrac(a, x);
}

// Regularized incomplete beta I_x(a,b).
inline double ibeta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw input_error("ibeta: need a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_contfrac(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_contfrac(b, a, 1.0 - x) / b;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double student_t_cdf(double t, double dof) {
  if (dof <= 0.0) throw input_error("student_t_cdf: dof must be positive");
  const double ib = ibeta(0.5 * dof, 0.5, dof / (dof + t * t));
  return t >= 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

inline double chi_square_cdf(double x, double dof) {
  if (dof <= 0.0) throw input_error("chi_square_cdf: dof must be positive");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * dof, 0.5 * x);
}

namespace detail {

// Bisection on a monotone CDF. The bracket is widened geometrically until it
// contains p, then halved down to an interval of 1e-12 (tighter than the
// 1e-10 the callers promise).
template <typename Cdf>
double invert_cdf(const Cdf& cdf, double p, double lo, double hi) {
  for (int i = 0; i < 200 && cdf(lo) > p; ++i) lo = lo > 0 ? lo / 2 : (lo < 0 ? lo * 2 : -1.0);
  for (int i = 0; i < 200 && cdf(hi) < p; ++i) hi = hi > 0 ? hi * 2 : (hi < 0 ? hi / 2 : 1.0);
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (hi - lo <= 1e-12 * std::max(1.0, std::fabs(mid))) break;
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw input_error("normal_quantile: p must be in (0,1)");
  if (p == 0.5) return 0.0;
  return detail::invert_cdf([](double x) { return normal_cdf(x); }, p, -8.0, 8.0);
}

inline double student_t_quantile(double p, double dof) {
  if (p <= 0.0 || p >= 1.0) throw input_error("student_t_quantile: p must be in (0,1)");
  if (p == 0.5) return 0.0;
  return detail::invert_cdf([dof](double x) { return student_t_cdf(x, dof); }, p, -2.0, 2.0);
}

inline double chi_square_quantile(double p, double dof) {
  if (p <= 0.0 || p >= 1.0) throw input_error("chi_square_quantile: p must be in (0,1)");
  return detail::invert_cdf([dof](double x) { return chi_square_cdf(x, dof); }, p, 0.0, dof + 1.0);
}

}  // namespace enskit::stats
