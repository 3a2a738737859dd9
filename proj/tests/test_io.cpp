#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "enskit/io.hpp"
#include "helpers.hpp"

using namespace enskit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("enskit_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("ISO-8601 round trip") {
  const std::int64_t t = time_util::parse_iso8601("2016-11-26T13:45:07");
  CHECK(time_util::format_iso8601(t) == "2016-11-26T13:45:07");
  CHECK(time_util::parse_iso8601("2016-11-26 13:45:07") == t);
  CHECK(time_util::parse_iso8601("2016-11-26") == t - 13 * 3600 - 45 * 60 - 7);
  CHECK_THROWS_AS(time_util::parse_iso8601("26/11/2016"), input_error);
  CHECK(time_util::weekday(time_util::parse_iso8601("2016-11-26")) == 6);  // Saturday
}

TEST_CASE("well-formed trajectory file loads") {
  TempDir dir;
  write_file(dir.file("t.csv"),
             "timestamp,active_kw\n"
             "2020-01-01T00:00:00,10.5\n"
             "2020-01-01T01:00:00,11.5\n"
             "2020-01-01T02:00:00,12.5\n");
  const auto traj = io::load_trajectory_csv(dir.file("t.csv"));
  CHECK(traj.size() == 3);
  CHECK(traj.period_s == 3600.0);
  CHECK(traj.active_kw[2] == 12.5);
  CHECK_FALSE(traj.has_reactive());
}

TEST_CASE("missing header is rejected") {
  TempDir dir;
  write_file(dir.file("t.csv"), "2020-01-01T00:00:00,10.5\n2020-01-01T01:00:00,11.0\n");
  CHECK_THROWS_WITH(io::load_trajectory_csv(dir.file("t.csv")),
                    Catch::Matchers::ContainsSubstring("header"));
}

TEST_CASE("malformed rows are reported with their line number") {
  TempDir dir;
  write_file(dir.file("t.csv"),
             "timestamp,active_kw\n"
             "2020-01-01T00:00:00,10.5\n"
             "2020-01-01T01:00:00,oops\n");
  CHECK_THROWS_WITH(io::load_trajectory_csv(dir.file("t.csv")),
                    Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("a skipped hour is flagged as a gap") {
  TempDir dir;
  write_file(dir.file("t.csv"),
             "timestamp,active_kw\n"
             "2020-01-01T00:00:00,1\n"
             "2020-01-01T01:00:00,2\n"
             "2020-01-01T03:00:00,3\n"
             "2020-01-01T04:00:00,4\n");
  const auto traj = io::load_trajectory_csv(dir.file("t.csv"));
  REQUIRE(traj.gap_indices.size() == 1);
  CHECK(traj.gap_indices[0] == 1);
}

TEST_CASE("non-uniform sampling is rejected") {
  TempDir dir;
  write_file(dir.file("t.csv"),
             "timestamp,active_kw\n"
             "2020-01-01T00:00:00,1\n"
             "2020-01-01T01:00:00,2\n"
             "2020-01-01T02:00:00,3\n"
             "2020-01-01T02:30:00,4\n");
  CHECK_THROWS_WITH(io::load_trajectory_csv(dir.file("t.csv")),
                    Catch::Matchers::ContainsSubstring("non-uniform"));
}

TEST_CASE("trajectory save/load round trip preserves samples") {
  TempDir dir;
  std::vector<std::int64_t> t{0, 900, 1800};
  std::vector<double> p{1.25, 2.5, 3.75};
  std::vector<double> q{0.1, 0.2, 0.3};
  const auto traj = markov::make_trajectory(t, p, q);
  io::save_trajectory_csv(traj, dir.file("t.csv"));
  const auto loaded = io::load_trajectory_csv(dir.file("t.csv"));
  CHECK(loaded.time_s == traj.time_s);
  CHECK(loaded.active_kw == traj.active_kw);
  CHECK(loaded.reactive_kvar == traj.reactive_kvar);
}

TEST_CASE("transition matrix and state bins round trip") {
  TempDir dir;
  std::mt19937_64 rng(1);
  const auto m = testutil::random_stochastic(4, rng);
  std::vector<markov::StateLevel> levels;
  for (int i = 0; i < 4; ++i)
    levels.push_back({i + 0.4, 0.1 * i, static_cast<double>(i), static_cast<double>(i + 1)});
  const markov::StateSpace ss(std::move(levels));
  io::save_transition_matrix(m, ss, dir.file("m.csv"), dir.file("s.json"));

  const auto m2 = io::load_transition_matrix(dir.file("m.csv"));
  const auto ss2 = io::load_state_space(dir.file("s.json"));
  CHECK((m2.matrix() - m.matrix()).lpNorm<Eigen::Infinity>() <= 1e-12);
  REQUIRE(ss2.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(ss2.level(i).power_kw == Catch::Approx(ss.level(i).power_kw));
    CHECK(ss2.level(i).lo == Catch::Approx(ss.level(i).lo));
  }
}

TEST_CASE("network JSON parses into a tree") {
  TempDir dir;
  write_file(dir.file("net.json"), R"({
    "base_kva": 1000.0,
    "v0_pu": 1.0,
    "substation": "A",
    "buses": [
      {"id": "A"},
      {"id": "B", "load_p_kw": [100.0, 120.0], "load_q_kvar": 30.0},
      {"id": "C", "load_p_kw": 50.0,
       "flex": {"p_min_kw": 0.0, "p_max_kw": 80.0, "q_min_kvar": 0.0, "q_max_kvar": 0.0}}
    ],
    "lines": [
      {"from": "A", "to": "B", "r_pu": 0.01, "x_pu": 0.02},
      {"from": "B", "to": "C", "r_pu": 0.015, "x_pu": 0.03}
    ]
  })");
  const auto net = io::load_network_json(dir.file("net.json"));
  CHECK(net.n_buses() == 3);
  CHECK(net.root() == 0);
  CHECK(net.load_p_kw(1, 1) == 120.0);
  CHECK(net.load_q_kvar(1, 0) == 30.0);
  CHECK(net.flexible_buses() == std::vector<int>{2});
}

TEST_CASE("config hash is stable") {
  CHECK(io::fnv1a64("abc") == io::fnv1a64("abc"));
  CHECK(io::fnv1a64("abc") != io::fnv1a64("abd"));
}

TEST_CASE("number formatting is locale-free and compact") {
  CHECK(io::format_number(0.5) == "0.5");
  CHECK(io::format_number(-1234.0) == "-1234");
  CHECK(io::format_number(1e-9) == "1e-09");
}
