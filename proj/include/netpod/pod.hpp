#pragma once

#include <string>
#include <string_view>
#include <variant>

#include <Eigen/Dense>

namespace netpod {

struct SnapshotMatrix {
  Eigen::MatrixXd states;  // N x K
  double dt = 1.0;

  Eigen::Index snapshots() const noexcept { return states.cols(); }
  double t_obs() const noexcept { return static_cast<double>(states.cols() - 1) * dt; }
};

/// Thin SVD X = U diag(sigma) V^T with r = min(N, K) columns, sigma
/// descending. The largest-magnitude entry of each column of U is positive
/// (first such entry on ties), with V flipped to match.
struct ThinSvd {
  Eigen::MatrixXd u;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd v;
};

ThinSvd thin_svd(const Eigen::MatrixXd& x);

/// Flips column signs so the largest-magnitude entry of each column of
/// `vectors` is positive; applies the same flips to `companion` if given.
void canonicalize_signs(Eigen::MatrixXd& vectors, Eigen::MatrixXd* companion = nullptr);

struct FixedModes {
  Eigen::Index m = 2;
};
struct EnergyThreshold {
  double epsilon = 0.01;
};
using ModePolicy = std::variant<FixedModes, EnergyThreshold>;

Eigen::Index select_modes(const Eigen::VectorXd& sigma, const ModePolicy& policy);

struct PodBasis {
  Eigen::MatrixXd modes;  // N x m, orthonormal columns
  Eigen::VectorXd sigma;  // all min(N, K) singular values of the snapshot matrix
  Eigen::VectorXd mean;   // subtracted before projection; zero unless centered

  Eigen::Index nodes() const noexcept { return modes.rows(); }
  Eigen::Index m() const noexcept { return modes.cols(); }
};

/// Agitation modes from the snapshot SVD. `center` subtracts the temporal
/// mean before the SVD (off by default).
PodBasis compute_basis(const SnapshotMatrix& snapshots, const ModePolicy& policy,
                       bool center = false);

struct CoeffSeries {
  Eigen::MatrixXd c;  // m x K
  double dt = 1.0;
};

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& x);
CoeffSeries project(const PodBasis& basis, const SnapshotMatrix& snapshots);
Eigen::MatrixXd project(const PodBasis& basis, const Eigen::MatrixXd& x);

Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& c);
Eigen::MatrixXd reconstruct(const PodBasis& basis, const CoeffSeries& coeffs);
Eigen::MatrixXd reconstruct(const PodBasis& basis, const Eigen::MatrixXd& c);

/// Line 1: JSON header {N, K, m, dt, t_obs, centered}. Then "# modes" with N
/// CSV rows of m values, "# sigma" with one value per line and, when
/// centered, "# mean" with N values.
std::string basis_to_text(const PodBasis& basis, Eigen::Index snapshots, double dt);
PodBasis basis_from_text(std::string_view text);

}  // namespace netpod
