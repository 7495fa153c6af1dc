#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "netpod/graph.hpp"

namespace netpod {

/// Mean-field SIS: dx_i/dt = -delta_i x_i + (1 - x_i) sum_j a_ij x_j.
struct SisParams {
  SisParams(Graph graph, Eigen::VectorXd delta);

  Graph graph;
  Eigen::VectorXd delta;
};

/// Consensus: dx/dt = -L x on an undirected graph.
struct ConsensusParams {
  explicit ConsensusParams(Graph graph);

  Graph graph;
  Eigen::MatrixXd laplacian;
};

/// Equidistant snapshots: column k is the state at t0 + k * dt.
struct Trajectory {
  Eigen::MatrixXd states;
  double dt = 1.0;
  double t0 = 0.0;

  Eigen::Index nodes() const noexcept { return states.rows(); }
  Eigen::Index snapshots() const noexcept { return states.cols(); }
  double time(Eigen::Index k) const noexcept { return t0 + static_cast<double>(k) * dt; }
};

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

Eigen::VectorXd sis_rhs(const SisParams& params, const Eigen::VectorXd& x);
Eigen::VectorXd consensus_rhs(const ConsensusParams& params, const Eigen::VectorXd& x);

/// Classical fixed-step RK4. Records `steps` + 1 columns spaced `dt` apart;
/// each recorded interval is covered by `substeps` RK4 steps of dt / substeps.
/// Throws DivergenceError naming the first step with a non-finite state.
Trajectory integrate_rk4(const VectorField& rhs, const Eigen::VectorXd& x0, double dt,
                         std::size_t steps, std::size_t substeps = 1);

/// i.i.d. uniform on (0, 0.2].
Eigen::VectorXd sample_initial_sis(Eigen::Index n, std::uint64_t seed);
Eigen::VectorXd sample_curing_rates(Eigen::Index n, std::uint64_t seed);

/// Advisory RK4 step bound 0.1 / max_i(delta_i + in_strength_i).
double sis_step_bound(const SisParams& params);

/// Header "t,node_0,...,node_{N-1}", one row per snapshot.
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(std::string_view text);

}  // namespace netpod
