#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netpod/dynamics.hpp"
#include "netpod/graph.hpp"
#include "netpod/pod.hpp"
#include "netpod/sindy.hpp"

namespace netpod {

struct PipelineConfig {
  double obs_fraction = 0.5;
  ModePolicy modes = FixedModes{2};
  bool center = false;
  LibrarySpec library;
  SolverOptions solver = Sr3Options{};
  int coeff_substeps = 1;  // RK4 steps per snapshot interval for the coefficient ODE

  void validate() const;
};

/// Number of leading snapshots in the observation window: floor(obs_fraction * K).
Eigen::Index observation_count(Eigen::Index snapshots, double obs_fraction);

struct FitResult {
  PodBasis basis;
  CoeffSeries coeffs;  // over the observation window
  SindyModel model;
  Eigen::Index k_obs = 0;
  double t_obs = 0.0;  // relative to the trajectory start
  double dt = 1.0;
};

/// Fits POD + SINDy on the first observation_count(K) snapshots only.
FitResult fit(const Trajectory& traj, const PipelineConfig& cfg);

/// Same, on an already-sliced observation window.
FitResult fit_window(const SnapshotMatrix& window, const PipelineConfig& cfg);

struct Forecast {
  Eigen::MatrixXd fitted;        // N x K_obs reconstruction on [0, t_obs] (may be empty)
  Eigen::MatrixXd predicted;     // N x K_pred states on (t_obs, t_pred]
  Eigen::MatrixXd coefficients;  // m x (K_pred + 1), column 0 at t_obs (POD forecasts only)
  Eigen::VectorXd start_state;   // state at t_obs the integration starts from
  double t_obs = 0.0;
  double dt = 1.0;
  bool diverged = false;
  double last_valid_time = 0.0;

  double predicted_time(Eigen::Index j) const noexcept {
    return t_obs + static_cast<double>(j + 1) * dt;
  }
};

/// Integrates the identified coefficient ODE from c(t_obs) and reconstructs
/// the nodal states. A non-finite coefficient truncates the forecast and sets
/// `diverged`.
Forecast forecast(const PodBasis& basis, const SindyModel& model,
                  const Eigen::VectorXd& c_obs_end, double t_obs, double t_pred, double dt,
                  int substeps = 1);

struct Metrics {
  Eigen::VectorXd rmse;          // per snapshot
  double relative_l2 = 0.0;      // ||pred - truth||_F / ||truth||_F
  bool relative_undefined = false;  // truth is zero; relative_l2 is +inf
  Eigen::VectorXd node_max_abs;  // per node
  double overall_rmse = 0.0;
};

Metrics error_metrics(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth);

/// Clamps to [0, 1]; returns whether any entry moved.
bool clamp_unit_interval(Eigen::MatrixXd& values);

struct PipelineResult {
  FitResult fit;
  Forecast forecast;
  Eigen::MatrixXd baseline;   // x(t_obs) repeated over the held-out window
  Eigen::MatrixXd truth_fit;  // observation window
  Eigen::MatrixXd truth_pred; // held-out window
  Eigen::MatrixXd reported_fit;   // fitted, clamped when probabilities
  Eigen::MatrixXd reported_pred;  // predicted, clamped when probabilities
  bool clamped = false;
  Metrics fit_metrics;
  Metrics predict_metrics;
  Metrics baseline_metrics;
};

/// fit + forecast over the held-out snapshots of `traj`, plus the
/// constant-extrapolation baseline. When `probabilities` is set, reported
/// states are clamped to [0, 1] (integration itself is never clamped).
PipelineResult run_pipeline(const Trajectory& traj, const PipelineConfig& cfg,
                            bool probabilities);

struct SurrogateParams {
  Eigen::VectorXd delta;
  Eigen::VectorXd rho;        // per-node L1 weights, >= 0
  long max_sweeps = 200000;
  double tol = 1e-8;          // max coordinate change per sweep
};

/// rho_i = 1e-3 * K_obs for every node.
Eigen::VectorXd default_rho(Eigen::Index n, Eigen::Index k_obs);

struct SurrogateNodeFit {
  Eigen::VectorXd weights;             // row i of A-hat
  std::vector<double> objective_trace; // objective after each sweep
  long sweeps = 0;
  bool converged = false;
};

/// Nonnegative L1-regularized fit of row `node` of the surrogate adjacency
/// from forward differences of the window. The diagonal entry stays zero.
SurrogateNodeFit surrogate_fit_node(const Eigen::MatrixXd& window, double dt, Eigen::Index node,
                                    double delta, double rho, long max_sweeps, double tol);

struct SurrogateResult {
  Graph a_hat;
  long max_sweeps_used = 0;
  bool converged = true;
};

SurrogateResult surrogate_fit(const SnapshotMatrix& window, const SurrogateParams& params);

Forecast surrogate_forecast(const Graph& a_hat, const Eigen::VectorXd& delta,
                            const Eigen::VectorXd& x_obs, double t_obs, double t_pred, double dt,
                            int substeps = 1);

/// Long-format rows "t,node_i,truth,fitted_or_predicted,phase".
std::string forecast_to_csv(const Eigen::MatrixXd& truth_fit, const Eigen::MatrixXd& fitted,
                            const Eigen::MatrixXd& truth_pred, const Eigen::MatrixXd& predicted,
                            double t0, double dt);

std::string metrics_to_json(const Metrics& metrics);

}  // namespace netpod
