#include "doctest.h"
#include "netpod/error.hpp"
#include "netpod/sindy.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace netpod;
using testutil::max_abs;

namespace {

LibrarySpec linear_only() {
  LibrarySpec s;
  s.include_constant = false;
  s.poly_orders = {1};
  return s;
}

// Samples of dc/dt = D c along the exact solution c(t) = exp(D t) c0.
struct LinearData {
  Eigen::MatrixXd c;
  DerivativeMatrix d;
};

LinearData diag_system(double dt, int k) {
  CoeffSeries s;
  s.dt = dt;
  s.c.resize(2, k);
  for (int j = 0; j < k; ++j) {
    s.c(0, j) = 1.5 * std::exp(-1.0 * j * dt);
    s.c(1, j) = -0.7 * std::exp(-2.0 * j * dt);
  }
  LinearData out{s.c, central_difference(s)};
  // Replace the stencil with the exact derivative so the regression target is noise free.
  out.d.cdot.row(0) = -1.0 * out.d.aligned(s.c).row(0);
  out.d.cdot.row(1) = -2.0 * out.d.aligned(s.c).row(1);
  return out;
}

}  // namespace

TEST_CASE("central differences") {
  CoeffSeries flat{Eigen::MatrixXd::Constant(2, 6, 3.0), 0.1};
  const DerivativeMatrix z = central_difference(flat);
  CHECK(z.cdot.cols() == 4);
  CHECK(z.first_index == 1);
  CHECK(z.cdot.isZero(0));

  CoeffSeries line{Eigen::MatrixXd(1, 11), 0.1};
  for (int k = 0; k < 11; ++k) line.c(0, k) = 0.1 * k;
  CHECK(max_abs(central_difference(line).cdot.array() - 1.0) < 1e-13);

  auto max_err = [](double dt) {
    const int k = static_cast<int>(std::lround(1.0 / dt)) + 1;
    CoeffSeries e{Eigen::MatrixXd(1, k), dt};
    for (int j = 0; j < k; ++j) e.c(0, j) = std::exp(-j * dt);
    const DerivativeMatrix d = central_difference(e);
    double err = 0;
    for (int j = 0; j < d.cdot.cols(); ++j) err = std::max(err, std::abs(d.cdot(0, j) + std::exp(-(j + 1) * dt)));
    return err;
  };
  CHECK(max_err(0.01) <= 2e-5);
  const double ratio = max_err(0.01) / max_err(0.005);
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);

  CHECK_THROWS_AS(central_difference(CoeffSeries{Eigen::MatrixXd::Zero(1, 2), 0.1}), Error);
}

TEST_CASE("library construction") {
  LibrarySpec s1;
  s1.poly_orders = {1};
  CHECK(build_library(Eigen::MatrixXd::Constant(1, 1, 2.0), s1) == Eigen::Vector2d(1, 2));

  LibrarySpec s2;
  s2.include_constant = false;
  s2.poly_orders = {2};
  const Eigen::VectorXd col = evaluate_library(Eigen::Vector2d(3, 5), s2);
  CHECK(col == Eigen::Vector4d(9, 15, 15, 25));
  CHECK(s2.names(2) == std::vector<std::string>{"c1*c1", "c1*c2", "c2*c1", "c2*c2"});

  LibrarySpec s3;
  s3.trig = {TrigTerm{TrigKind::sin, 1.0}};
  CHECK(s3.size(2) == 9);
  CHECK(evaluate_library(Eigen::Vector2d(0.3, -0.2), s3).size() == 9);
  CHECK(evaluate_library(Eigen::Vector2d(0.3, -0.2), s3)[7] == doctest::Approx(std::sin(0.3)));
  CHECK(s3.names(2).back() == "sin(1*c2)");

  LibrarySpec s4;
  CHECK(s4.size(3) == 13);
  s4.poly_orders = {3, 1};
  CHECK(s4.names(2)[1] == "c1");
  CHECK(s4.names(2).back() == "c2*c2*c2");
  CHECK(build_library(Eigen::Vector2d(2, 3), s4)(s4.size(2) - 1, 0) == 27.0);

  LibrarySpec bad;
  bad.poly_orders = {0};
  CHECK_THROWS_AS(bad.validate(), Error);
  LibrarySpec bad_trig;
  bad_trig.trig = {TrigTerm{TrigKind::cos, -1.0}};
  CHECK_THROWS_AS(bad_trig.validate(), Error);
}

TEST_CASE("stlsq") {
  const LinearData data = diag_system(0.01, 400);
  const Eigen::MatrixXd theta = build_library(data.d.aligned(data.c), linear_only());

  const SindyModel zero = solve_stlsq(theta, Eigen::MatrixXd::Zero(2, theta.cols()), linear_only());
  CHECK(zero.xi.isZero(0));

  StlsqOptions opt;
  opt.threshold = 0.1;
  const SindyModel m = solve_stlsq(theta, data.d.cdot, linear_only(), opt);
  CHECK(std::abs(m.xi(0, 0) + 1.0) < 1e-8);
  CHECK(std::abs(m.xi(1, 1) + 2.0) < 1e-8);
  CHECK(m.xi(0, 1) == 0.0);
  CHECK(m.xi(1, 0) == 0.0);
  CHECK(m.diagnostics.nonzeros == 2);
  CHECK(m.diagnostics.converged);

  // Raw-unit thresholding also works.
  opt.normalize = false;
  opt.ridge = 0.0;
  const SindyModel raw = solve_stlsq(theta, data.d.cdot, linear_only(), opt);
  CHECK(max_abs(raw.xi - Eigen::Vector2d(-1, -2).asDiagonal().toDenseMatrix()) < 1e-8);

  // Bit-for-bit reruns.
  CHECK(solve_stlsq(theta, data.d.cdot, linear_only(), opt).xi == raw.xi);
}

TEST_CASE("stlsq rank deficiency names the row") {
  const LinearData data = diag_system(0.01, 100);
  LibrarySpec quad;
  quad.include_constant = false;
  quad.poly_orders = {2};  // c1c2 and c2c1 coincide
  const Eigen::MatrixXd theta = build_library(data.d.aligned(data.c), quad);
  StlsqOptions opt;
  opt.ridge = 0.0;
  opt.threshold = 0.0;
  try {
    solve_stlsq(theta, data.d.cdot, quad, opt);
    FAIL("expected rank deficiency");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::rank_deficient);
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
  opt.ridge = 1e-10;
  CHECK_NOTHROW(solve_stlsq(theta, data.d.cdot, quad, opt));
}

TEST_CASE("stlsq residual bounds per sweep") {
  const Eigen::MatrixXd c = testutil::random_matrix(3, 200, 21);
  LibrarySpec lib;
  const Eigen::MatrixXd theta = build_library(c, lib);
  const Eigen::MatrixXd target = testutil::random_matrix(3, 200, 22) * 0.3 + 0.5 * theta.topRows(3);
  StlsqOptions opt;
  opt.threshold = 0.2;
  const SindyModel m = solve_stlsq(theta, target, lib, opt);
  for (Eigen::Index p = 0; p < 3; ++p) {
    const Eigen::VectorXd y = target.row(p).transpose();
    const Eigen::MatrixXd a = theta.transpose();
    const double ls = (y - a * a.completeOrthogonalDecomposition().solve(y)).norm();
    const auto& trace = m.diagnostics.sweep_residuals[static_cast<std::size_t>(p)];
    REQUIRE_FALSE(trace.empty());
    for (double r : trace) {
      CHECK(r >= ls - 1e-9);
      CHECK(r <= y.norm() + 1e-12);
    }
  }
}

TEST_CASE("sr3") {
  const LinearData data = diag_system(0.01, 400);
  const Eigen::MatrixXd theta = build_library(data.d.aligned(data.c), linear_only());

  Sr3Options free;
  free.gamma = 0.0;
  free.kappa = 1e-3;
  free.tol = 1e-14;
  free.max_iter = 100000;
  const SindyModel ls = solve_sr3(theta, data.d.cdot, linear_only(), free);
  const Eigen::MatrixXd oracle =
      theta.transpose().colPivHouseholderQr().solve(data.d.cdot.transpose()).transpose();
  CHECK(max_abs(ls.xi - oracle) < 1e-6);

  Sr3Options opt;
  opt.gamma = 1e-8;
  opt.kappa = 1e-4;
  opt.tol = 1e-13;
  opt.max_iter = 100000;
  const SindyModel m = solve_sr3(theta, data.d.cdot, linear_only(), opt);
  const SindyModel st = solve_stlsq(theta, data.d.cdot, linear_only(), StlsqOptions{});
  CHECK(((m.xi.array() != 0) == (st.xi.array() != 0)).all());
  CHECK(max_abs(m.xi - st.xi) < 1e-4);
  CHECK(m.diagnostics.converged);
  CHECK(solve_sr3(theta, data.d.cdot, linear_only(), opt).xi == m.xi);

  Sr3Options capped = opt;
  capped.max_iter = 2;
  CHECK_FALSE(solve_sr3(theta, data.d.cdot, linear_only(), capped).diagnostics.converged);
  Sr3Options bad = opt;
  bad.kappa = 0.0;
  CHECK_THROWS_AS(solve_sr3(theta, data.d.cdot, linear_only(), bad), Error);
}

TEST_CASE("sr3 support shrinks as gamma grows") {
  const Eigen::MatrixXd c = testutil::random_matrix(2, 300, 31);
  LibrarySpec lib;
  const Eigen::MatrixXd theta = build_library(c, lib);
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(2, lib.size(2));
  xi(0, 1) = -1.0;
  xi(0, 3) = 0.3;
  xi(1, 2) = 0.8;
  xi(1, 0) = 0.05;
  const Eigen::MatrixXd target = xi * theta + 0.01 * testutil::random_matrix(2, 300, 32);
  Eigen::Index previous = lib.size(2) * 2 + 1;
  for (int i = 0; i < 10; ++i) {
    Sr3Options opt;
    opt.gamma = 1e-3 * std::pow(3.0, i);
    const Eigen::Index nnz = solve_sr3(theta, target, lib, opt).diagnostics.nonzeros;
    CHECK(nnz <= previous);
    previous = nnz;
  }
  CHECK(previous == 0);
}

TEST_CASE("soft threshold") {
  for (int i = -40; i <= 40; ++i) {
    const double z = 0.1 * i;
    for (double t : {0.0, 0.25, 1.0, 3.5}) {
      const double expect = (z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0)) * std::max(std::abs(z) - t, 0.0);
      CHECK(soft_threshold(z, t) == doctest::Approx(expect).epsilon(1e-15));
    }
  }
}

TEST_CASE("model evaluation and serialization") {
  SindyModel zero;
  zero.library = linear_only();
  zero.xi = Eigen::MatrixXd::Zero(1, 1);
  CHECK(model_rhs(zero, Eigen::VectorXd::Constant(1, 4.0))[0] == 0.0);
  SindyModel neg = zero;
  neg.xi(0, 0) = -1.0;
  CHECK(model_rhs(neg, Eigen::VectorXd::Constant(1, 3.0))[0] == -3.0);
  CHECK_THROWS_AS(model_rhs(neg, Eigen::Vector2d(1, 1)), Error);

  const Eigen::MatrixXd c = testutil::random_matrix(3, 50, 41);
  LibrarySpec lib;
  lib.trig = {TrigTerm{TrigKind::cos, 2.0}};
  SindyModel m;
  m.library = lib;
  m.xi = testutil::random_matrix(3, lib.size(3), 42);
  m.xi(1, 4) = 0.0;
  m.solver = StlsqOptions{0.05, 1e-8, 7, false};
  const Eigen::MatrixXd batch = m.xi * build_library(c, lib);
  for (int k = 0; k < 50; ++k) CHECK(max_abs(model_rhs(m, Eigen::VectorXd(c.col(k))) - batch.col(k)) <= 1e-12);

  const std::string text = model_to_json(m);
  CHECK(text.find("\"stlsq\"") != std::string::npos);
  CHECK(text.find("cos(2*c3)") != std::string::npos);
  const SindyModel back = model_from_json(text);
  CHECK(back.xi == m.xi);
  CHECK(back.xi(1, 4) == 0.0);
  CHECK(back.library.size(3) == lib.size(3));
  CHECK(std::get<StlsqOptions>(back.solver).max_sweeps == 7);
  CHECK(model_to_json(back) == text);
  CHECK_THROWS_AS(model_from_json("{"), Error);
}
