#include "netpod/dynamics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "netpod/error.hpp"
#include "netpod/io.hpp"
#include "netpod/rng.hpp"

namespace netpod {

SisParams::SisParams(Graph g, Eigen::VectorXd d) : graph(std::move(g)), delta(std::move(d)) {
  if (delta.size() != graph.n())
    throw Error(ErrorKind::dimension_mismatch, "curing-rate vector length must equal node count");
  if (!delta.allFinite() || (delta.array() <= 0.0).any())
    throw Error(ErrorKind::domain, "curing rates must be finite and strictly positive");
}

ConsensusParams::ConsensusParams(Graph g) : graph(std::move(g)), laplacian(netpod::laplacian(graph)) {}

Eigen::VectorXd sis_rhs(const SisParams& params, const Eigen::VectorXd& x) {
  if (x.size() != params.graph.n())
    throw Error(ErrorKind::dimension_mismatch, "state length must equal node count");
  const Eigen::VectorXd pressure = params.graph.adjacency() * x;
  return (-params.delta.array() * x.array() + (1.0 - x.array()) * pressure.array()).matrix();
}

Eigen::VectorXd consensus_rhs(const ConsensusParams& params, const Eigen::VectorXd& x) {
  if (x.size() != params.laplacian.rows())
    throw Error(ErrorKind::dimension_mismatch, "state length must equal node count");
  return -(params.laplacian * x);
}

Trajectory integrate_rk4(const VectorField& rhs, const Eigen::VectorXd& x0, double dt,
                         std::size_t steps, std::size_t substeps) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::invalid_argument, "dt must be positive");
  if (steps < 1) throw Error(ErrorKind::invalid_argument, "need at least one step");
  if (substeps < 1) throw Error(ErrorKind::invalid_argument, "substeps must be at least 1");
  if (!x0.allFinite()) throw Error(ErrorKind::non_finite, "initial state is not finite");

  Trajectory traj;
  traj.dt = dt;
  traj.states.resize(x0.size(), static_cast<Eigen::Index>(steps + 1));
  traj.states.col(0) = x0;
  const double h = dt / static_cast<double>(substeps);
  Eigen::VectorXd x = x0;
  for (std::size_t step = 1; step <= steps; ++step) {
    for (std::size_t sub = 0; sub < substeps; ++sub) {
      const Eigen::VectorXd k1 = rhs(x);
      const Eigen::VectorXd k2 = rhs(x + 0.5 * h * k1);
      const Eigen::VectorXd k3 = rhs(x + 0.5 * h * k2);
      const Eigen::VectorXd k4 = rhs(x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!x.allFinite())
      throw DivergenceError(step, "integration diverged at step " + std::to_string(step));
    traj.states.col(static_cast<Eigen::Index>(step)) = x;
  }
  return traj;
}

namespace {

Eigen::VectorXd sample_unit_fifth(Eigen::Index n, std::uint64_t seed, RngStream stream) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "need at least one node");
  CounterRng rng(seed, static_cast<std::uint32_t>(stream));
  Eigen::VectorXd v(n);
  // 1 - u lies in (0, 1], so the samples avoid zero.
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 0.2 * (1.0 - rng.uniform());
  return v;
}

}  // namespace

Eigen::VectorXd sample_initial_sis(Eigen::Index n, std::uint64_t seed) {
  return sample_unit_fifth(n, seed, RngStream::initial_state);
}

Eigen::VectorXd sample_curing_rates(Eigen::Index n, std::uint64_t seed) {
  return sample_unit_fifth(n, seed, RngStream::curing_rates);
}

double sis_step_bound(const SisParams& params) {
  return 0.1 / (params.delta + params.graph.in_strength()).maxCoeff();
}

std::string trajectory_to_csv(const Trajectory& traj) {
  std::string out = "t";
  for (Eigen::Index i = 0; i < traj.nodes(); ++i) out += ",node_" + std::to_string(i);
  out += '\n';
  for (Eigen::Index k = 0; k < traj.snapshots(); ++k) {
    out += format_double(traj.time(k));
    for (Eigen::Index i = 0; i < traj.nodes(); ++i) {
      out += ',';
      out += format_double(traj.states(i, k));
    }
    out += '\n';
  }
  return out;
}

Trajectory trajectory_from_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0, line_no = 0;
  std::size_t columns = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line_no == 1) {
      if (!line.starts_with("t,") && line != "t") throw ParseError(1, "expected header 't,node_0,...'");
      columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
      continue;
    }
    std::vector<double> row;
    std::size_t field_start = 0;
    while (field_start <= line.size()) {
      auto comma = line.find(',', field_start);
      if (comma == std::string_view::npos) comma = line.size();
      const auto field = line.substr(field_start, comma - field_start);
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc() || ptr != field.data() + field.size())
        throw ParseError(line_no, "bad number '" + std::string(field) + "'");
      row.push_back(value);
      field_start = comma + 1;
    }
    if (row.size() != columns) throw ParseError(line_no, "wrong number of fields");
    rows.push_back(std::move(row));
  }
  if (columns < 2) throw ParseError(1, "trajectory needs at least one node column");
  if (rows.size() < 2) throw Error(ErrorKind::insufficient_data, "trajectory needs at least two snapshots");

  Trajectory traj;
  const auto k = static_cast<Eigen::Index>(rows.size());
  const auto n = static_cast<Eigen::Index>(columns - 1);
  traj.states.resize(n, k);
  for (Eigen::Index c = 0; c < k; ++c)
    for (Eigen::Index i = 0; i < n; ++i) traj.states(i, c) = rows[c][i + 1];
  traj.t0 = rows.front()[0];
  traj.dt = (rows.back()[0] - rows.front()[0]) / static_cast<double>(k - 1);
  if (!(traj.dt > 0.0)) throw Error(ErrorKind::invalid_argument, "trajectory times must increase");
  return traj;
}

}  // namespace netpod
