#include "doctest.h"
#include "netpod/dynamics.hpp"
#include "netpod/error.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace netpod;

namespace {

Graph two_node(double a12, double a21) {
  Eigen::MatrixXd a(2, 2);
  a << 0, a12, a21, 0;
  return Graph::from_adjacency(a, a12 != a21);
}

}  // namespace

TEST_CASE("sis right-hand side") {
  const SisParams p(two_node(0.3, 0.3), Eigen::Vector2d(0.1, 0.2));
  CHECK(sis_rhs(p, Eigen::Vector2d::Zero()).isZero(0));
  CHECK(sis_rhs(p, Eigen::Vector2d::Ones()) == -p.delta);
  const Eigen::VectorXd d = sis_rhs(p, Eigen::Vector2d(0.5, 0.4));
  CHECK(d[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK_THROWS_AS(sis_rhs(p, Eigen::Vector3d::Zero()), Error);
  CHECK_THROWS_AS(SisParams(two_node(0.3, 0.3), Eigen::Vector2d(0.1, 0.0)), Error);
  CHECK_THROWS_AS(SisParams(two_node(0.3, 0.3), Eigen::Vector3d(0.1, 0.1, 0.1)), Error);
}

TEST_CASE("consensus right-hand side") {
  const ConsensusParams path(generate_path(4));
  CHECK(consensus_rhs(path, Eigen::Vector4d::Constant(0.7)).cwiseAbs().maxCoeff() < 1e-15);
  const ConsensusParams edge(generate_path(2));
  CHECK(consensus_rhs(edge, Eigen::Vector2d(1, 0)) == Eigen::Vector2d(-1, 1));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(path.laplacian);
  const Eigen::VectorXd u2 = es.eigenvectors().col(1);
  CHECK((consensus_rhs(path, u2) + es.eigenvalues()[1] * u2).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::VectorXd x = Eigen::Vector4d(0.3, -1.2, 2.0, 0.1);
  CHECK(std::abs(consensus_rhs(path, x).sum()) <= 1e-10 * x.norm());
  CHECK_THROWS_AS(ConsensusParams(generate_sbm(SbmSpec{{3}, 1.0, 0.0, 1.0, true, 0})), Error);
}

TEST_CASE("rk4 integration") {
  const VectorField zero = [](const Eigen::VectorXd& x) { return Eigen::VectorXd::Zero(x.size()); };
  const Trajectory flat = integrate_rk4(zero, Eigen::Vector2d(1, 2), 0.1, 5);
  CHECK(flat.snapshots() == 6);
  for (int k = 0; k < 6; ++k) CHECK(flat.states.col(k) == Eigen::Vector2d(1, 2));

  const VectorField decay = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); };
  const Trajectory e = integrate_rk4(decay, Eigen::VectorXd::Ones(1), 0.01, 100);
  CHECK(std::abs(e.states(0, 100) - std::exp(-1.0)) < 1e-9);
  CHECK(e.time(100) == doctest::Approx(1.0));

  // Global error ratio under step halving.
  const double err1 = std::abs(integrate_rk4(decay, Eigen::VectorXd::Ones(1), 0.1, 10).states(0, 10) - std::exp(-1.0));
  const double err2 = std::abs(integrate_rk4(decay, Eigen::VectorXd::Ones(1), 0.05, 20).states(0, 20) - std::exp(-1.0));
  CHECK(err1 / err2 >= 14.0);
  CHECK(err1 / err2 <= 18.0);

  // Substeps refine without changing the recorded grid.
  const Trajectory sub = integrate_rk4(decay, Eigen::VectorXd::Ones(1), 0.1, 10, 2);
  CHECK(sub.snapshots() == 11);
  CHECK(std::abs(sub.states(0, 10) - std::exp(-1.0)) == doctest::Approx(err2).epsilon(1e-6));

  const ConsensusParams tree(generate_balanced_tree(2, 2));
  Eigen::VectorXd x0(7);
  x0 << 1, 0, 0, 0.5, 0, 0, 2;
  const Trajectory c = integrate_rk4([&](const Eigen::VectorXd& x) { return consensus_rhs(tree, x); }, x0, 0.05, 2000);
  CHECK((c.states.col(2000).array() - x0.mean()).abs().maxCoeff() < 1e-6);

  CHECK_THROWS_AS(integrate_rk4(decay, Eigen::VectorXd::Ones(1), 0.0, 3), Error);
  CHECK_THROWS_AS(integrate_rk4(decay, Eigen::VectorXd::Ones(1), 0.1, 0), Error);
}

TEST_CASE("rk4 divergence names the step") {
  const VectorField blowup = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.array().square() * 1e300); };
  try {
    integrate_rk4(blowup, Eigen::VectorXd::Constant(1, 10.0), 1.0, 50);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.kind() == ErrorKind::divergence);
    CHECK(e.step() >= 1);
    CHECK(e.step() <= 50);
  }
}

TEST_CASE("samplers") {
  const Eigen::VectorXd x = sample_initial_sis(10000, 5);
  const Eigen::VectorXd d = sample_curing_rates(10000, 5);
  CHECK(x.minCoeff() > 0.0);
  CHECK(x.maxCoeff() <= 0.2);
  CHECK(d.minCoeff() > 0.0);
  CHECK(d.maxCoeff() <= 0.2);
  CHECK(x.mean() >= 0.095);
  CHECK(x.mean() <= 0.105);
  CHECK(d.mean() >= 0.095);
  CHECK(d.mean() <= 0.105);
  CHECK(sample_initial_sis(50, 5) == x.head(50));
  CHECK(sample_initial_sis(50, 6) != x.head(50));
  CHECK(x.head(50) != d.head(50));
}

TEST_CASE("sis trajectories stay in the unit interval") {
  const Graph g = generate_sbm(SbmSpec{{10, 10}, 0.5, 0.1, 0.8, true, 2});
  const SisParams p(g, sample_curing_rates(20, 2));
  const double dt = sis_step_bound(p);
  CHECK(dt == doctest::Approx(0.1 / (p.delta + g.in_strength()).maxCoeff()));
  for (auto x0 : {Eigen::VectorXd(sample_initial_sis(20, 3)), Eigen::VectorXd(Eigen::VectorXd::Ones(20)),
                  Eigen::VectorXd(Eigen::VectorXd::Constant(20, 1e-3))}) {
    const Trajectory t = integrate_rk4([&](const Eigen::VectorXd& x) { return sis_rhs(p, x); }, x0, dt, 2000);
    CHECK(t.states.minCoeff() >= -1e-9);
    CHECK(t.states.maxCoeff() <= 1 + 1e-9);
  }
}

TEST_CASE("trajectory csv round trip") {
  const SisParams p(two_node(0.3, 0.5), Eigen::Vector2d(0.1, 0.2));
  Trajectory t = integrate_rk4([&](const Eigen::VectorXd& x) { return sis_rhs(p, x); }, Eigen::Vector2d(0.1, 0.15),
                               0.1, 20);
  t.t0 = 1.5;
  const std::string csv = trajectory_to_csv(t);
  CHECK(csv.rfind("t,node_0,node_1\n", 0) == 0);
  const Trajectory back = trajectory_from_csv(csv);
  CHECK(back.states == t.states);
  CHECK(back.t0 == 1.5);
  CHECK(back.dt == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(trajectory_to_csv(back) == csv);
  try {
    trajectory_from_csv("t,node_0\n0,1\n0.1,abc\n");
    FAIL("expected parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}
