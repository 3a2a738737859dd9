#include <catch2/catch_amalgamated.hpp>

#include "enskit/stats.hpp"

using namespace enskit;

TEST_CASE("student t quantile matches table values") {
  // Standard-table oracles, dof = 9.
  CHECK(std::fabs(stats::student_t_quantile(0.975, 9) - 2.262) < 1e-3);
  CHECK(std::fabs(stats::student_t_quantile(0.95, 9) - 1.833) < 1e-3);
  CHECK(stats::student_t_quantile(0.5, 9) == 0.0);
  CHECK(stats::student_t_quantile(0.025, 9) == Catch::Approx(-2.262).margin(1e-3));
}

TEST_CASE("chi-square quantile matches table values") {
  CHECK(std::fabs(stats::chi_square_quantile(0.975, 9) - 19.023) < 1e-3);
  CHECK(std::fabs(stats::chi_square_quantile(0.025, 9) - 2.700) < 1e-3);
  CHECK(std::fabs(stats::chi_square_quantile(0.95, 10) - 18.307) < 1e-3);
}

TEST_CASE("normal quantile") {
  CHECK(std::fabs(stats::normal_quantile(0.975) - 1.959964) < 1e-5);
  CHECK(std::fabs(stats::normal_quantile(0.95) - 1.644854) < 1e-5);
  CHECK(stats::normal_quantile(0.5) == 0.0);
  CHECK(stats::normal_quantile(0.25) == Catch::Approx(-stats::normal_quantile(0.75)).margin(1e-12));
}

TEST_CASE("quantiles invert their CDFs") {
  for (const double p : {0.01, 0.2, 0.5, 0.8, 0.99}) {
    CHECK(stats::normal_cdf(stats::normal_quantile(p)) == Catch::Approx(p).margin(1e-9));
    CHECK(stats::student_t_cdf(stats::student_t_quantile(p, 7), 7) ==
          Catch::Approx(p).margin(1e-9));
    CHECK(stats::chi_square_cdf(stats::chi_square_quantile(p, 7), 7) ==
          Catch::Approx(p).margin(1e-9));
  }
}

TEST_CASE("incomplete functions reject bad arguments") {
  CHECK_THROWS_AS(stats::gamma_p(-1.0, 1.0), input_error);
  CHECK_THROWS_AS(stats::ibeta(0.0, 1.0, 0.5), input_error);
  CHECK_THROWS_AS(stats::normal_quantile(0.0), input_error);
  CHECK_THROWS_AS(stats::chi_square_quantile(1.0, 3), input_error);
}
