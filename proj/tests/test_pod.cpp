#include "doctest.h"
#include "netpod/error.hpp"
#include "netpod/pod.hpp"
#include "test_util.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace netpod;
using testutil::max_abs;
using testutil::random_matrix;

TEST_CASE("thin svd examples") {
  const ThinSvd id = thin_svd(Eigen::MatrixXd::Identity(3, 3));
  CHECK(id.sigma == Eigen::Vector3d::Ones());

  const Eigen::VectorXd u = Eigen::Vector3d(1, 2, 2) / 3.0;
  const Eigen::VectorXd v = Eigen::Vector4d(1, -1, 1, -1) / 2.0;
  const ThinSvd r1 = thin_svd(u * v.transpose());
  CHECK(r1.sigma[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r1.sigma.tail(2).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(max_abs(r1.u.col(0) - u) < 1e-14);  // largest entry positive

  const Eigen::MatrixXd x = random_matrix(6, 8, 1);
  const ThinSvd s = thin_svd(x);
  Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(x * x.transpose()).eigenvalues().reverse();
  for (int p = 0; p < 6; ++p) CHECK(std::abs(s.sigma[p] - std::sqrt(ev[p])) < 1e-9);

  Eigen::MatrixXd bad = x;
  bad(2, 2) = std::nan("");
  CHECK_THROWS_AS(thin_svd(bad), Error);
}

TEST_CASE("thin svd postconditions across shapes") {
  unsigned seed = 10;
  for (auto [n, k] : std::vector<std::pair<int, int>>{{3, 40}, {40, 3}, {17, 17}, {70, 90}, {120, 66}, {1, 5}}) {
    const Eigen::MatrixXd x = random_matrix(n, k, seed++);
    const ThinSvd s = thin_svd(x);
    const int r = std::min(n, k);
    CHECK(s.u.cols() == r);
    CHECK(s.v.cols() == r);
    CHECK((x - s.u * s.sigma.asDiagonal() * s.v.transpose()).norm() <= 1e-10 * x.norm());
    CHECK(max_abs(s.u.transpose() * s.u - Eigen::MatrixXd::Identity(r, r)) <= 1e-10);
    CHECK(max_abs(s.v.transpose() * s.v - Eigen::MatrixXd::Identity(r, r)) <= 1e-10);
    for (int p = 1; p < r; ++p) CHECK(s.sigma[p] <= s.sigma[p - 1]);
    for (int p = 0; p < r; ++p) {
      Eigen::Index i;
      s.u.col(p).cwiseAbs().maxCoeff(&i);
      CHECK(s.u(i, p) > 0);
    }
    const ThinSvd again = thin_svd(x);
    CHECK(again.u == s.u);
    CHECK(again.sigma == s.sigma);
    CHECK(again.v == s.v);
  }
}

TEST_CASE("mode selection") {
  CHECK(select_modes(Eigen::Vector3d(1, 0, 0), EnergyThreshold{0.01}) == 1);
  CHECK(select_modes(Eigen::Vector3d(2, 1, 1), EnergyThreshold{0.1}) == 3);
  CHECK(select_modes(Eigen::Vector3d(2, 1, 1), EnergyThreshold{0.2}) == 2);
  CHECK(select_modes(Eigen::Vector3d(3, 2, 1), FixedModes{2}) == 2);
  CHECK(select_modes(Eigen::Vector3d(3, 2, 1), FixedModes{7}) == 3);
  CHECK_THROWS_AS(select_modes(Eigen::Vector3d(3, 2, 1), EnergyThreshold{0.0}), Error);
  CHECK_THROWS_AS(select_modes(Eigen::Vector3d(3, 2, 1), EnergyThreshold{1.0}), Error);
  CHECK_THROWS_AS(select_modes(Eigen::Vector3d(1, 2, 1), FixedModes{1}), Error);
}

TEST_CASE("projection and reconstruction") {
  const Eigen::MatrixXd x = random_matrix(12, 30, 3);
  const PodBasis b = compute_basis(SnapshotMatrix{x, 0.1}, FixedModes{4});
  CHECK(b.m() == 4);
  CHECK(b.sigma.size() == 12);
  CHECK(max_abs(b.modes.transpose() * b.modes - Eigen::MatrixXd::Identity(4, 4)) <= 1e-10);

  const Eigen::VectorXd c1 = project(b, Eigen::VectorXd(b.modes.col(0)));
  CHECK(max_abs(c1 - Eigen::Vector4d(1, 0, 0, 0)) < 1e-12);
  const Eigen::MatrixXd q = b.modes * b.modes.transpose();
  const Eigen::VectorXd orth = (Eigen::MatrixXd::Identity(12, 12) - q) * x.col(0);
  CHECK(project(b, orth).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(reconstruct(b, Eigen::VectorXd(Eigen::VectorXd::Zero(4))).isZero(0));

  const Eigen::MatrixXd c = project(b, x);
  CHECK(max_abs(project(b, reconstruct(b, c)) - c) <= 1e-10);
  const CoeffSeries series = project(b, SnapshotMatrix{x, 0.1});
  CHECK(series.c == c);
  CHECK(series.dt == 0.1);

  CHECK_THROWS_AS(project(b, Eigen::VectorXd(Eigen::VectorXd::Zero(5))), Error);
  CHECK_THROWS_AS(reconstruct(b, Eigen::VectorXd(Eigen::VectorXd::Zero(3))), Error);

  // Exact representation of a rank-3 matrix.
  const Eigen::MatrixXd low = random_matrix(12, 3, 4) * random_matrix(3, 30, 5);
  const PodBasis b3 = compute_basis(SnapshotMatrix{low, 1.0}, FixedModes{3});
  CHECK((low - reconstruct(b3, project(b3, low))).norm() <= 1e-9 * low.norm());
  CHECK(compute_basis(SnapshotMatrix{low, 1.0}, EnergyThreshold{1e-6}).m() == 3);
}

TEST_CASE("eckart-young residual") {
  const Eigen::MatrixXd x = random_matrix(9, 14, 8);
  const PodBasis full = compute_basis(SnapshotMatrix{x, 1.0}, FixedModes{9});
  for (int m = 1; m <= 9; ++m) {
    const PodBasis b = compute_basis(SnapshotMatrix{x, 1.0}, FixedModes{m});
    const double resid = (x - reconstruct(b, project(b, x))).norm();
    const double tail = std::sqrt(full.sigma.tail(9 - m).squaredNorm());
    CHECK(std::abs(resid - tail) <= 1e-8 * std::max(tail, 1e-300) + 1e-12 * x.norm());
  }
}

TEST_CASE("centering option") {
  Eigen::MatrixXd x = random_matrix(5, 20, 2);
  x.array() += 3.0;
  const PodBasis b = compute_basis(SnapshotMatrix{x, 1.0}, FixedModes{5}, true);
  CHECK(b.mean.size() == 5);
  CHECK(max_abs(reconstruct(b, project(b, x)) - x) < 1e-10);
  const PodBasis raw = compute_basis(SnapshotMatrix{x, 1.0}, FixedModes{2});
  CHECK(raw.mean.isZero(0));
}

TEST_CASE("basis text round trip") {
  const Eigen::MatrixXd x = random_matrix(7, 11, 6);
  const PodBasis b = compute_basis(SnapshotMatrix{x, 0.25}, FixedModes{3});
  const std::string text = basis_to_text(b, 11, 0.25);
  CHECK(text.find("\"t_obs\"") != std::string::npos);
  const PodBasis back = basis_from_text(text);
  CHECK(back.modes == b.modes);
  CHECK(back.sigma == b.sigma);
  CHECK(basis_to_text(back, 11, 0.25) == text);
  CHECK_THROWS_AS(basis_from_text("not a basis"), Error);
}
