#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "netpod/pod.hpp"

namespace netpod {

enum class TrigKind { sin, cos };

struct TrigTerm {
  TrigKind kind = TrigKind::sin;
  double omega = 1.0;
};

/// Candidate functions, in this order: the constant; then each polynomial
/// order in ascending order, where order q contributes all m^q ordered
/// products c_{i1} * ... * c_{iq} in row-major index order (order 2 gives
/// c1c1, c1c2, ..., c1cm, c2c1, ..., cmcm); then for each trig term, one
/// function per coefficient row.
struct LibrarySpec {
  bool include_constant = true;
  std::vector<int> poly_orders{1, 2};
  std::vector<TrigTerm> trig;

  /// Total function count d for m coefficient rows.
  Eigen::Index size(Eigen::Index m) const;
  std::vector<std::string> names(Eigen::Index m) const;
  void validate() const;
};

/// Central differences on interior snapshots 1..K-2. Column j of `cdot`
/// pairs with column first_index + j of the source series.
struct DerivativeMatrix {
  Eigen::MatrixXd cdot;
  Eigen::Index first_index = 1;
  double dt = 1.0;

  /// The matching columns of the source coefficient matrix.
  Eigen::MatrixXd aligned(const Eigen::MatrixXd& c) const {
    return c.middleCols(first_index, cdot.cols());
  }
};

DerivativeMatrix central_difference(const CoeffSeries& coeffs);

/// d x K' library matrix for the K' columns of `c`.
Eigen::MatrixXd build_library(const Eigen::MatrixXd& c, const LibrarySpec& spec);
Eigen::VectorXd evaluate_library(const Eigen::VectorXd& c, const LibrarySpec& spec);

struct StlsqOptions {
  double threshold = 0.1;   // lambda
  double ridge = 1e-10;     // alpha; 0 means plain least squares
  int max_sweeps = 20;
  bool normalize = true;    // scale library functions to unit 2-norm
};

struct Sr3Options {
  double gamma = 0.05;
  double kappa = 1.0;
  int max_iter = 10000;
  double tol = 1e-10;
  bool normalize = true;
};

using SolverOptions = std::variant<StlsqOptions, Sr3Options>;

struct SindyDiagnostics {
  double residual = 0.0;         // ||Cdot - Xi Theta||_F in original units
  Eigen::Index nonzeros = 0;
  int iterations = 0;            // STLSQ: max sweeps over rows; SR3: iterations
  bool converged = true;
  double relaxed_objective = 0.0;  // SR3 only
  /// STLSQ: per coefficient row, the least-squares residual of each sweep's fit.
  std::vector<std::vector<double>> sweep_residuals;
};

struct SindyModel {
  Eigen::MatrixXd xi;  // m x d
  LibrarySpec library;
  SolverOptions solver;
  SindyDiagnostics diagnostics;

  Eigen::Index m() const noexcept { return xi.rows(); }
  const char* solver_name() const noexcept;
};

/// Sequentially thresholded least squares, row by row. Throws
/// Error(rank_deficient) when an active-set system is singular and ridge = 0.
SindyModel solve_stlsq(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cdot,
                       const LibrarySpec& library, const StlsqOptions& options = {});

/// Sparse relaxed regularized regression for
///   1/2 ||Cdot - Xi Theta||^2 + gamma ||W||_1 + kappa/2 ||Xi - W||^2.
/// Returns W, whose zeros are exact.
SindyModel solve_sr3(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cdot,
                     const LibrarySpec& library, const Sr3Options& options = {});

SindyModel solve(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cdot,
                 const LibrarySpec& library, const SolverOptions& options);

/// sign(z) * max(|z| - threshold, 0)
inline double soft_threshold(double z, double threshold) noexcept {
  const double shrunk = (z < 0 ? -z : z) - threshold;
  if (shrunk <= 0.0) return 0.0;
  return z < 0 ? -shrunk : shrunk;
}

Eigen::VectorXd model_rhs(const SindyModel& model, const Eigen::VectorXd& c);

/// Library spec, solver name, hyperparameters, dense Xi with explicit zeros
/// and the diagnostics, as a JSON document.
std::string model_to_json(const SindyModel& model);
SindyModel model_from_json(std::string_view text);

}  // namespace netpod
