#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "enskit/common.hpp"
#include "enskit/gridopf.hpp"
#include "enskit/lsmdp.hpp"
#include "enskit/markov.hpp"
#include "enskit/time.hpp"

// File formats: trajectories as `timestamp,active_kw[,reactive_kvar]` CSV
// with ISO-8601 timestamps, transition matrices as row-major CSV with a JSON
// sidecar describing the state bins, networks as a single JSON document.
// Numeric output uses a fixed %.12g format so identical runs produce
// identical bytes.

namespace enskit::io {

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw input_error("malformed number '" + s + "' at line " + std::to_string(line_no));
  }
}

// --- Trajectory CSV ---------------------------------------------------

inline markov::Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open trajectory file " + path);
  std::string line;
  if (!std::getline(in, line)) throw input_error(path + ": empty file");
  const auto header = split_csv_line(line);
  const bool has_q = header.size() == 3 && trim(header[2]) == "reactive_kvar";
  if (!(header.size() >= 2 && trim(header[0]) == "timestamp" && trim(header[1]) == "active_kw" &&
        (header.size() == 2 || has_q)))
    throw input_error(path + ": expected header timestamp,active_kw[,reactive_kvar]");

  std::vector<std::int64_t> times;
  std::vector<double> p, q;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw input_error(path + ": wrong column count at line " + std::to_string(line_no));
    try {
      times.push_back(time_util::parse_iso8601(trim(cells[0])));
    } catch (const input_error& e) {
      throw input_error(path + ": " + e.what() + " at line " + std::to_string(line_no));
    }
    p.push_back(parse_double(trim(cells[1]), line_no));
    if (has_q) q.push_back(parse_double(trim(cells[2]), line_no));
  }
  if (times.size() < 2) throw input_error(path + ": need at least two samples");
  try {
    return markov::make_trajectory(std::move(times), std::move(p), std::move(q));
  } catch (const input_error& e) {
    throw input_error(path + ": " + e.what());
  }
}

inline void save_trajectory_csv(const markov::Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw input_error("cannot write " + path);
  out << (traj.has_reactive() ? "timestamp,active_kw,reactive_kvar\n" : "timestamp,active_kw\n");
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out << time_util::format_iso8601(traj.time_s[i]) << ',' << format_number(traj.active_kw[i]);
    if (traj.has_reactive()) out << ',' << format_number(traj.reactive_kvar[i]);
    out << '\n';
  }
}

// --- Transition matrix CSV + state-bin sidecar -------------------------

inline void save_transition_matrix(const markov::TransitionMatrix& m,
                                   const markov::StateSpace& ss, const std::string& matrix_path,
                                   const std::string& states_path) {
  std::ofstream out(matrix_path);
  if (!out) throw input_error("cannot write " + matrix_path);
  for (int a = 0; a < m.size(); ++a) {
    for (int b = 0; b < m.size(); ++b) out << (b ? "," : "") << format_number(m(a, b));
    out << '\n';
  }
  nlohmann::json j;
  j["states"] = nlohmann::json::array();
  for (int i = 0; i < ss.size(); ++i) {
    const auto& s = ss.level(i);
    j["states"].push_back({{"index", i},
                           {"power_kw", s.power_kw},
                           {"reactive_kvar", s.reactive_kvar},
                           {"bin_lo_kw", s.lo},
                           {"bin_hi_kw", s.hi}});
  }
  j["convention"] = "column-stochastic; entry (row a, col b) = P(b -> a)";
  std::ofstream sj(states_path);
  if (!sj) throw input_error("cannot write " + states_path);
  sj << j.dump(2) << '\n';
}

inline markov::TransitionMatrix load_transition_matrix(const std::string& matrix_path) {
  std::ifstream in(matrix_path);
  if (!in) throw input_error("cannot open matrix file " + matrix_path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(trim(c), line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw input_error(matrix_path + ": empty matrix");
  const std::size_t n = rows.size();
  Eigen::MatrixXd m(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    if (rows[a].size() != n) throw input_error(matrix_path + ": matrix is not square");
    for (std::size_t b = 0; b < n; ++b) m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = rows[a][b];
  }
  return markov::TransitionMatrix(std::move(m));
}

inline markov::StateSpace load_state_space(const std::string& states_path) {
  std::ifstream in(states_path);
  if (!in) throw input_error("cannot open states file " + states_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw input_error(states_path + ": bad JSON: " + e.what());
  }
  if (!j.contains("states") || !j["states"].is_array())
    throw input_error(states_path + ": missing states array");
  std::vector<markov::StateLevel> levels;
  for (const auto& s : j["states"]) {
    markov::StateLevel lvl;
    lvl.power_kw = s.at("power_kw").get<double>();
    lvl.reactive_kvar = s.value("reactive_kvar", 0.0);
    lvl.lo = s.at("bin_lo_kw").get<double>();
    lvl.hi = s.at("bin_hi_kw").get<double>();
    levels.push_back(lvl);
  }
  return markov::StateSpace(std::move(levels));
}

// --- Radial network JSON ------------------------------------------------

// Schema: { "base_kva": .., "v0_pu": .., "substation": "A",
//           "buses": [ { "id": "A", "load_p_kw": x | [..], "load_q_kvar": ..,
//                        "v_min_pu": .., "v_max_pu": ..,
//                        "flex": { "p_min_kw": .., "p_max_kw": ..,
//                                  "q_min_kvar": .., "q_max_kvar": .. } } ],
//           "lines": [ { "from": "A", "to": "B", "r_pu": .., "x_pu": .. } ] }
// Loads and impedances are interpreted against base_kva (per-unit base).
struct NetworkParts {
  std::vector<gridopf::Bus> buses;
  std::vector<gridopf::Line> lines;
  std::string substation;
  double base_kva = 0.0;
  double v0_pu = 1.0;

  gridopf::RadialNetwork build() const {
    return gridopf::RadialNetwork(buses, lines, substation, base_kva, v0_pu);
  }
};

inline NetworkParts load_network_parts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open network file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw input_error(path + ": bad JSON: " + e.what());
  }
  auto as_vector = [](const nlohmann::json& v) {
    Eigen::VectorXd out;
    if (v.is_number()) {
      out.resize(1);
      out(0) = v.get<double>();
    } else if (v.is_array()) {
      out.resize(static_cast<Eigen::Index>(v.size()));
      for (std::size_t i = 0; i < v.size(); ++i)
        out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    } else {
      throw input_error("network: load must be a number or array");
    }
    return out;
  };
  try {
    NetworkParts parts;
    for (const auto& jb : j.at("buses")) {
      gridopf::Bus b;
      b.id = jb.at("id").get<std::string>();
      b.load_p_kw = jb.contains("load_p_kw") ? as_vector(jb["load_p_kw"]) : Eigen::VectorXd();
      b.load_q_kvar = jb.contains("load_q_kvar") ? as_vector(jb["load_q_kvar"]) : Eigen::VectorXd();
      b.v_min_pu = jb.value("v_min_pu", 0.95);
      b.v_max_pu = jb.value("v_max_pu", 1.05);
      if (jb.contains("flex")) {
        gridopf::FlexRange f;
        f.p_min_kw = jb["flex"].value("p_min_kw", 0.0);
        f.p_max_kw = jb["flex"].value("p_max_kw", 0.0);
        f.q_min_kvar = jb["flex"].value("q_min_kvar", 0.0);
        f.q_max_kvar = jb["flex"].value("q_max_kvar", 0.0);
        b.flex = f;
      }
      parts.buses.push_back(std::move(b));
    }
    for (const auto& jl : j.at("lines")) {
      gridopf::Line l;
      l.from = jl.at("from").get<std::string>();
      l.to = jl.at("to").get<std::string>();
      l.r_pu = jl.at("r_pu").get<double>();
      l.x_pu = jl.at("x_pu").get<double>();
      parts.lines.push_back(std::move(l));
    }
    parts.substation = j.at("substation").get<std::string>();
    parts.base_kva = j.at("base_kva").get<double>();
    parts.v0_pu = j.value("v0_pu", 1.0);
    return parts;
  } catch (const nlohmann::json::exception& e) {
    throw input_error(path + ": " + e.what());
  }
}

inline gridopf::RadialNetwork load_network_json(const std::string& path) {
  return load_network_parts(path).build();
}

// --- Misc ---------------------------------------------------------------

inline void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path,
                            const std::string& header = "") {
  std::ofstream out(path);
  if (!out) throw input_error("cannot write " + path);
  if (!header.empty()) out << header << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_number(m(r, c));
    out << '\n';
  }
}

inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace enskit::io

namespace enskit::synth {

inline markov::Trajectory load_trajectory(const std::string& path) {
  return io::load_trajectory_csv(path);
}

}  // namespace enskit::synth
