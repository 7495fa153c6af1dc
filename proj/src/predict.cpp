#include "netpod/predict.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "json.hpp"
#include "netpod/error.hpp"
#include "netpod/io.hpp"

namespace netpod {
namespace {

struct Integration {
  Eigen::MatrixXd states;  // start column plus every completed interval
  bool diverged = false;
};

// RK4 interval by interval so a blow-up keeps the valid prefix.
Integration integrate_guarded(const VectorField& rhs, const Eigen::VectorXd& x0, double dt,
                              Eigen::Index steps, int substeps) {
  Integration out;
  out.states.resize(x0.size(), steps + 1);
  out.states.col(0) = x0;
  Eigen::Index done = 0;
  for (; done < steps; ++done) {
    try {
      const Trajectory piece = integrate_rk4(rhs, out.states.col(done), dt, 1,
                                             static_cast<std::size_t>(substeps));
      out.states.col(done + 1) = piece.states.col(1);
    } catch (const DivergenceError&) {
      out.diverged = true;
      break;
    }
  }
  out.states.conservativeResize(Eigen::NoChange, done + 1);
  return out;
}

Eigen::Index horizon_steps(double t_obs, double t_pred, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_argument, "dt must be positive");
  if (!(t_pred > t_obs)) throw Error(ErrorKind::invalid_argument, "t_pred must exceed t_obs");
  const auto steps = static_cast<Eigen::Index>(std::llround((t_pred - t_obs) / dt));
  if (steps < 1) throw Error(ErrorKind::invalid_argument, "forecast horizon is shorter than one step");
  return steps;
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(obs_fraction > 0.0 && obs_fraction < 1.0))
    throw Error(ErrorKind::invalid_argument, "obs_fraction must lie in (0, 1)");
  if (coeff_substeps < 1) throw Error(ErrorKind::invalid_argument, "coeff_substeps must be at least 1");
  library.validate();
}

Eigen::Index observation_count(Eigen::Index snapshots, double obs_fraction) {
  return static_cast<Eigen::Index>(std::floor(obs_fraction * static_cast<double>(snapshots)));
}

FitResult fit_window(const SnapshotMatrix& window, const PipelineConfig& cfg) {
  cfg.validate();
  const Eigen::Index k_obs = window.snapshots();
  if (k_obs < 3)
    throw Error(ErrorKind::insufficient_data,
                "observation window has " + std::to_string(k_obs) + " snapshots; at least 3 required");
  FitResult r;
  r.basis = compute_basis(window, cfg.modes, cfg.center);
  const Eigen::Index d = cfg.library.size(r.basis.m());
  const Eigen::Index required = std::max<Eigen::Index>(3, d + 1);
  if (k_obs < required)
    throw Error(ErrorKind::insufficient_data,
                "observation window has " + std::to_string(k_obs) + " snapshots; at least " +
                    std::to_string(required) + " required for a library of " + std::to_string(d) +
                    " functions");
  r.coeffs = project(r.basis, window);
  const DerivativeMatrix deriv = central_difference(r.coeffs);
  const Eigen::MatrixXd theta = build_library(deriv.aligned(r.coeffs.c), cfg.library);
  r.model = solve(theta, deriv.cdot, cfg.library, cfg.solver);
  r.k_obs = k_obs;
  r.dt = window.dt;
  r.t_obs = window.t_obs();
  return r;
}

FitResult fit(const Trajectory& traj, const PipelineConfig& cfg) {
  cfg.validate();
  const Eigen::Index k_obs = observation_count(traj.snapshots(), cfg.obs_fraction);
  if (k_obs < 3)
    throw Error(ErrorKind::insufficient_data,
                "observation window has " + std::to_string(k_obs) + " snapshots; at least 3 required");
  return fit_window(SnapshotMatrix{traj.states.leftCols(k_obs), traj.dt}, cfg);
}

Forecast forecast(const PodBasis& basis, const SindyModel& model, const Eigen::VectorXd& c_obs_end,
                  double t_obs, double t_pred, double dt, int substeps) {
  if (c_obs_end.size() != model.m() || basis.m() != model.m())
    throw Error(ErrorKind::dimension_mismatch, "model, basis and coefficient sizes disagree");
  if (substeps < 1) throw Error(ErrorKind::invalid_argument, "substeps must be at least 1");
  const Eigen::Index steps = horizon_steps(t_obs, t_pred, dt);
  const VectorField rhs = [&model](const Eigen::VectorXd& c) { return model_rhs(model, c); };
  const Integration run = integrate_guarded(rhs, c_obs_end, dt, steps, substeps);

  Forecast f;
  f.t_obs = t_obs;
  f.dt = dt;
  f.coefficients = run.states;
  f.start_state = reconstruct(basis, Eigen::VectorXd(c_obs_end));
  f.predicted = reconstruct(basis, Eigen::MatrixXd(run.states.rightCols(run.states.cols() - 1)));
  f.diverged = run.diverged;
  f.last_valid_time = t_obs + static_cast<double>(run.states.cols() - 1) * dt;
  return f;
}

Metrics error_metrics(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
    throw Error(ErrorKind::dimension_mismatch,
                "prediction is " + std::to_string(predicted.rows()) + "x" +
                    std::to_string(predicted.cols()) + " but truth is " + std::to_string(truth.rows()) +
                    "x" + std::to_string(truth.cols()));
  const Eigen::MatrixXd diff = predicted - truth;
  Metrics m;
  const double n = static_cast<double>(std::max<Eigen::Index>(diff.rows(), 1));
  m.rmse = (diff.colwise().squaredNorm().transpose() / n).cwiseSqrt();
  m.node_max_abs = diff.rows() > 0 && diff.cols() > 0 ? Eigen::VectorXd(diff.cwiseAbs().rowwise().maxCoeff())
                                                     : Eigen::VectorXd::Zero(diff.rows());
  m.overall_rmse = diff.size() > 0 ? std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size())) : 0.0;
  const double truth_norm = truth.norm();
  if (truth_norm == 0.0) {
    m.relative_l2 = std::numeric_limits<double>::infinity();
    m.relative_undefined = true;
  } else {
    m.relative_l2 = diff.norm() / truth_norm;
  }
  return m;
}

bool clamp_unit_interval(Eigen::MatrixXd& values) {
  bool moved = false;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    double& v = values.data()[k];
    if (v < 0.0) {
      v = 0.0;
      moved = true;
    } else if (v > 1.0) {
      v = 1.0;
      moved = true;
    }
  }
  return moved;
}

PipelineResult run_pipeline(const Trajectory& traj, const PipelineConfig& cfg, bool probabilities) {
  cfg.validate();
  const Eigen::Index k = traj.snapshots();
  const Eigen::Index k_obs = observation_count(k, cfg.obs_fraction);
  const Eigen::Index k_pred = k - k_obs;
  if (k_pred < 2)
    throw Error(ErrorKind::insufficient_data,
                "held-out window has " + std::to_string(k_pred) + " snapshots; at least 2 required");

  PipelineResult r;
  r.fit = fit(traj, cfg);
  r.truth_fit = traj.states.leftCols(k_obs);
  r.truth_pred = traj.states.rightCols(k_pred);
  const double t_obs = r.fit.t_obs;
  const double t_pred = static_cast<double>(k - 1) * traj.dt;
  r.forecast = forecast(r.fit.basis, r.fit.model, r.fit.coeffs.c.col(k_obs - 1), t_obs, t_pred,
                        traj.dt, cfg.coeff_substeps);
  r.forecast.fitted = reconstruct(r.fit.basis, r.fit.coeffs);
  r.baseline = r.truth_fit.col(k_obs - 1).replicate(1, k_pred);

  r.reported_fit = r.forecast.fitted;
  r.reported_pred = r.forecast.predicted;
  if (probabilities) {
    const bool a = clamp_unit_interval(r.reported_fit);
    const bool b = clamp_unit_interval(r.reported_pred);
    r.clamped = a || b;
  }
  r.fit_metrics = error_metrics(r.reported_fit, r.truth_fit);
  const Eigen::Index valid = r.reported_pred.cols();
  r.predict_metrics = error_metrics(r.reported_pred, r.truth_pred.leftCols(valid));
  if (valid == 0) {
    r.predict_metrics.relative_l2 = std::numeric_limits<double>::infinity();
    r.predict_metrics.relative_undefined = true;
  }
  r.baseline_metrics = error_metrics(r.baseline, r.truth_pred);
  return r;
}

Eigen::VectorXd default_rho(Eigen::Index n, Eigen::Index k_obs) {
  return Eigen::VectorXd::Constant(n, 1e-3 * static_cast<double>(k_obs));
}

SurrogateNodeFit surrogate_fit_node(const Eigen::MatrixXd& window, double dt, Eigen::Index node,
                                    double delta, double rho, long max_sweeps, double tol) {
  const Eigen::Index n = window.rows();
  const Eigen::Index k = window.cols();
  if (node < 0 || node >= n) throw Error(ErrorKind::invalid_argument, "node index out of range");
  if (k < 2) throw Error(ErrorKind::insufficient_data, "surrogate fit needs at least 2 snapshots");
  if (!(dt > 0.0)) throw Error(ErrorKind::invalid_argument, "dt must be positive");
  if (!(rho >= 0.0)) throw Error(ErrorKind::domain, "rho must be nonnegative");
  if (max_sweeps < 1 || !(tol > 0.0)) throw Error(ErrorKind::invalid_argument, "invalid sweep limits");

  // Residual for sample k: y_k - sum_j a_j phi_kj with
  //   y_k = (x_i(k+1) - x_i(k)) / dt + delta x_i(k),  phi_kj = (1 - x_i(k)) x_j(k).
  const Eigen::Index samples = k - 1;
  const Eigen::VectorXd xi = window.row(node).head(samples).transpose();
  const Eigen::VectorXd y =
      (window.row(node).tail(samples) - window.row(node).head(samples)).transpose() / dt + delta * xi;
  Eigen::MatrixXd phi = window.leftCols(samples).transpose();
  phi.array().colwise() *= (1.0 - xi.array());
  phi.col(node).setZero();

  const Eigen::MatrixXd g = phi.transpose() * phi;
  const Eigen::VectorXd q = phi.transpose() * y;
  const double yy = y.squaredNorm();
  auto objective = [&](const Eigen::VectorXd& a) {
    return yy - 2.0 * q.dot(a) + a.dot(g * a) + rho * a.sum();
  };

  SurrogateNodeFit out;
  out.weights = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd& a = out.weights;
  Eigen::VectorXd ga = Eigen::VectorXd::Zero(n);  // g * a, kept in step with a
  while (out.sweeps < max_sweeps) {
    ++out.sweeps;
    double change = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == node || g(j, j) <= 0.0) continue;
      const double others = ga[j] - g(j, j) * a[j];
      const double next = std::max(0.0, (q[j] - 0.5 * rho - others) / g(j, j));
      const double step = next - a[j];
      if (step != 0.0) {
        ga += step * g.col(j);
        a[j] = next;
        change = std::max(change, std::abs(step));
      }
    }
    out.objective_trace.push_back(objective(a));
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

SurrogateResult surrogate_fit(const SnapshotMatrix& window, const SurrogateParams& params) {
  const Eigen::Index n = window.states.rows();
  if (params.delta.size() != n)
    throw Error(ErrorKind::dimension_mismatch, "delta length does not match node count");
  const Eigen::VectorXd rho = params.rho.size() == 0 ? default_rho(n, window.snapshots()) : params.rho;
  if (rho.size() != n) throw Error(ErrorKind::dimension_mismatch, "rho length does not match node count");
  if ((rho.array() < 0.0).any()) throw Error(ErrorKind::domain, "rho must be nonnegative");
  if (!window.states.allFinite()) throw Error(ErrorKind::non_finite, "surrogate window has non-finite entries");

  Eigen::MatrixXd a_hat = Eigen::MatrixXd::Zero(n, n);
  long sweeps = 0;
  bool converged = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    const SurrogateNodeFit node = surrogate_fit_node(window.states, window.dt, i, params.delta[i], rho[i],
                                                     params.max_sweeps, params.tol);
    a_hat.row(i) = node.weights.transpose();
    sweeps = std::max(sweeps, node.sweeps);
    converged = converged && node.converged;
  }
  return SurrogateResult{Graph::from_adjacency(std::move(a_hat), true), sweeps, converged};
}

Forecast surrogate_forecast(const Graph& a_hat, const Eigen::VectorXd& delta, const Eigen::VectorXd& x_obs,
                            double t_obs, double t_pred, double dt, int substeps) {
  if (x_obs.size() != a_hat.n())
    throw Error(ErrorKind::dimension_mismatch, "state length does not match surrogate size");
  if (substeps < 1) throw Error(ErrorKind::invalid_argument, "substeps must be at least 1");
  const Eigen::Index steps = horizon_steps(t_obs, t_pred, dt);
  const SisParams params(a_hat, delta);
  const VectorField rhs = [&params](const Eigen::VectorXd& x) { return sis_rhs(params, x); };
  const Integration run = integrate_guarded(rhs, x_obs, dt, steps, substeps);

  Forecast f;
  f.t_obs = t_obs;
  f.dt = dt;
  f.start_state = x_obs;
  f.predicted = run.states.rightCols(run.states.cols() - 1);
  f.diverged = run.diverged;
  f.last_valid_time = t_obs + static_cast<double>(run.states.cols() - 1) * dt;
  return f;
}

std::string forecast_to_csv(const Eigen::MatrixXd& truth_fit, const Eigen::MatrixXd& fitted,
                            const Eigen::MatrixXd& truth_pred, const Eigen::MatrixXd& predicted,
                            double t0, double dt) {
  if (fitted.size() > 0 && (fitted.rows() != truth_fit.rows() || fitted.cols() != truth_fit.cols()))
    throw Error(ErrorKind::dimension_mismatch, "fitted and observed windows differ in shape");
  if (predicted.rows() != truth_pred.rows() || predicted.cols() > truth_pred.cols())
    throw Error(ErrorKind::dimension_mismatch, "predicted and held-out windows differ in shape");
  std::string out = "t,node_i,truth,fitted_or_predicted,phase\n";
  auto emit = [&out](double t, Eigen::Index node, double truth, double value, const char* phase) {
    out += format_double(t);
    out += ',';
    out += std::to_string(node);
    out += ',';
    out += format_double(truth);
    out += ',';
    out += format_double(value);
    out += ',';
    out += phase;
    out += '\n';
  };
  if (fitted.size() > 0)
    for (Eigen::Index k = 0; k < fitted.cols(); ++k)
      for (Eigen::Index i = 0; i < fitted.rows(); ++i)
        emit(t0 + static_cast<double>(k) * dt, i, truth_fit(i, k), fitted(i, k), "fit");
  const Eigen::Index offset = truth_fit.cols();
  for (Eigen::Index k = 0; k < predicted.cols(); ++k)
    for (Eigen::Index i = 0; i < predicted.rows(); ++i)
      emit(t0 + static_cast<double>(offset + k) * dt, i, truth_pred(i, k), predicted(i, k), "predict");
  return out;
}

std::string metrics_to_json(const Metrics& metrics) {
  auto to_vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::ordered_json j;
  if (metrics.relative_undefined) j["relative_l2"] = nullptr;
  else j["relative_l2"] = metrics.relative_l2;
  j["relative_undefined"] = metrics.relative_undefined;
  j["overall_rmse"] = metrics.overall_rmse;
  j["rmse"] = to_vec(metrics.rmse);
  j["node_max_abs"] = to_vec(metrics.node_max_abs);
  return j.dump(2) + "\n";
}

}  // namespace netpod
