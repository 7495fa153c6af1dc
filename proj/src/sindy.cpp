#include "netpod/sindy.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "json_util.hpp"
#include "netpod/error.hpp"

namespace netpod {
namespace {

std::vector<int> sorted_orders(const LibrarySpec& spec) {
  std::set<int> unique(spec.poly_orders.begin(), spec.poly_orders.end());
  return {unique.begin(), unique.end()};
}

Eigen::Index ipow(Eigen::Index base, int exp) {
  Eigen::Index r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

std::string format_omega(double omega) {
  std::string s = std::to_string(omega);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

}  // namespace

void LibrarySpec::validate() const {
  for (int q : poly_orders)
    if (q < 1 || q > 8) throw Error(ErrorKind::invalid_argument, "polynomial orders must lie in [1, 8]");
  for (const auto& t : trig)
    if (!(t.omega > 0.0) || !std::isfinite(t.omega))
      throw Error(ErrorKind::invalid_argument, "trig frequency must be positive");
  if (!include_constant && poly_orders.empty() && trig.empty())
    throw Error(ErrorKind::invalid_argument, "library is empty");
}

Eigen::Index LibrarySpec::size(Eigen::Index m) const {
  Eigen::Index d = include_constant ? 1 : 0;
  for (int q : sorted_orders(*this)) d += ipow(m, q);
  return d + static_cast<Eigen::Index>(trig.size()) * m;
}

std::vector<std::string> LibrarySpec::names(Eigen::Index m) const {
  std::vector<std::string> out;
  if (include_constant) out.emplace_back("1");
  for (int q : sorted_orders(*this)) {
    std::vector<std::string> block{""};
    for (int level = 0; level < q; ++level) {
      std::vector<std::string> next;
      for (const auto& prefix : block)
        for (Eigen::Index i = 0; i < m; ++i)
          next.push_back(prefix + (prefix.empty() ? "" : "*") + "c" + std::to_string(i + 1));
      block = std::move(next);
    }
    out.insert(out.end(), block.begin(), block.end());
  }
  for (const auto& t : trig)
    for (Eigen::Index i = 0; i < m; ++i)
      out.push_back(std::string(t.kind == TrigKind::sin ? "sin(" : "cos(") + format_omega(t.omega) +
                    "*c" + std::to_string(i + 1) + ")");
  return out;
}

DerivativeMatrix central_difference(const CoeffSeries& coeffs) {
  const auto k = coeffs.c.cols();
  if (k < 3)
    throw Error(ErrorKind::insufficient_data,
                "central differences need at least 3 snapshots, got " + std::to_string(k));
  if (!(coeffs.dt > 0.0)) throw Error(ErrorKind::invalid_argument, "dt must be positive");
  DerivativeMatrix d;
  d.dt = coeffs.dt;
  d.first_index = 1;
  d.cdot = (coeffs.c.rightCols(k - 2) - coeffs.c.leftCols(k - 2)) / (2.0 * coeffs.dt);
  return d;
}

Eigen::MatrixXd build_library(const Eigen::MatrixXd& c, const LibrarySpec& spec) {
  spec.validate();
  const Eigen::Index m = c.rows();
  const Eigen::Index cols = c.cols();
  Eigen::MatrixXd theta(spec.size(m), cols);
  Eigen::Index row = 0;
  if (spec.include_constant) theta.row(row++).setOnes();
  for (int q : sorted_orders(spec)) {
    // Products for order q, built by extending every order q-1 product on the
    // right; the last index varies fastest.
    Eigen::MatrixXd block = Eigen::MatrixXd::Ones(1, cols);
    for (int level = 0; level < q; ++level) {
      Eigen::MatrixXd next(block.rows() * m, cols);
      for (Eigen::Index prefix = 0; prefix < block.rows(); ++prefix)
        for (Eigen::Index i = 0; i < m; ++i)
          next.row(prefix * m + i) = block.row(prefix).cwiseProduct(c.row(i));
      block = std::move(next);
    }
    theta.middleRows(row, block.rows()) = block;
    row += block.rows();
  }
  for (const auto& t : spec.trig) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::ArrayXXd arg = t.omega * c.row(i).array();
      if (t.kind == TrigKind::sin) theta.row(row++) = arg.sin().matrix();
      else theta.row(row++) = arg.cos().matrix();
    }
  }
  return theta;
}

Eigen::VectorXd evaluate_library(const Eigen::VectorXd& c, const LibrarySpec& spec) {
  return build_library(Eigen::MatrixXd(c), spec).col(0);
}

const char* SindyModel::solver_name() const noexcept {
  return std::holds_alternative<StlsqOptions>(solver) ? "stlsq" : "sr3";
}

namespace {

struct Design {
  Eigen::MatrixXd t;      // K' x d, columns scaled to unit norm when normalizing
  Eigen::VectorXd scale;  // column norms (1 when not normalizing or for zero columns)
  std::vector<bool> usable;
};

Design make_design(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cdot, bool normalize) {
  if (theta.cols() != cdot.cols())
    throw Error(ErrorKind::dimension_mismatch, "library and derivative matrices need the same sample count");
  if (!theta.allFinite() || !cdot.allFinite())
    throw Error(ErrorKind::non_finite, "regression data has non-finite entries");
  Design d;
  d.t = theta.transpose();
  d.scale = Eigen::VectorXd::Ones(theta.rows());
  d.usable.assign(static_cast<std::size_t>(theta.rows()), true);
  for (Eigen::Index j = 0; j < theta.rows(); ++j) {
    const double norm = theta.row(j).norm();
    if (norm == 0.0) {
      d.usable[j] = false;
      continue;
    }
    if (normalize) {
      d.scale[j] = norm;
      d.t.col(j) /= norm;
    }
  }
  return d;
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double ridge,
                              Eigen::Index row) {
  if (ridge > 0.0) {
    Eigen::MatrixXd aug(a.rows() + a.cols(), a.cols());
    aug << a, std::sqrt(ridge) * Eigen::MatrixXd::Identity(a.cols(), a.cols());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(aug.rows());
    rhs.head(b.size()) = b;
    return aug.householderQr().solve(rhs);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < a.cols())
    throw Error(ErrorKind::rank_deficient,
                "singular active-set system in STLSQ for coefficient row " + std::to_string(row + 1));
  return qr.solve(b);
}

void finish_diagnostics(SindyModel& model, const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cdot) {
  model.diagnostics.residual = (cdot - model.xi * theta).norm();
  model.diagnostics.nonzeros = (model.xi.array() != 0.0).count();
}

}  // namespace

SindyModel solve_stlsq(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cdot,
                       const LibrarySpec& library, const StlsqOptions& options) {
  if (!(options.threshold >= 0.0) || !(options.ridge >= 0.0) || options.max_sweeps < 1)
    throw Error(ErrorKind::invalid_argument, "invalid STLSQ options");
  const Design design = make_design(theta, cdot, options.normalize);
  const Eigen::Index d = theta.rows();

  SindyModel model;
  model.library = library;
  model.solver = options;
  model.xi = Eigen::MatrixXd::Zero(cdot.rows(), d);
  model.diagnostics.sweep_residuals.resize(static_cast<std::size_t>(cdot.rows()));

  for (Eigen::Index p = 0; p < cdot.rows(); ++p) {
    const Eigen::VectorXd target = cdot.row(p).transpose();
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < d; ++j)
      if (design.usable[j]) active.push_back(j);
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(d);
    bool converged = false;
    int sweep = 0;
    while (sweep < options.max_sweeps && !active.empty()) {
      ++sweep;
      Eigen::MatrixXd a(design.t.rows(), static_cast<Eigen::Index>(active.size()));
      for (std::size_t k = 0; k < active.size(); ++k) a.col(static_cast<Eigen::Index>(k)) = design.t.col(active[k]);
      const Eigen::VectorXd sol = least_squares(a, target, options.ridge, p);
      coef.setZero();
      for (std::size_t k = 0; k < active.size(); ++k) coef[active[k]] = sol[static_cast<Eigen::Index>(k)];
      model.diagnostics.sweep_residuals[p].push_back((target - a * sol).norm());

      std::vector<Eigen::Index> kept;
      for (Eigen::Index j : active)
        if (std::abs(coef[j]) >= options.threshold) kept.push_back(j);
      if (kept.size() == active.size()) {
        converged = true;
        break;
      }
      active = std::move(kept);
    }
    if (active.empty()) {
      coef.setZero();
      converged = true;
    }
    model.diagnostics.converged = model.diagnostics.converged && converged;
    model.diagnostics.iterations = std::max(model.diagnostics.iterations, sweep);
    model.xi.row(p) = coef.cwiseQuotient(design.scale).transpose();
  }
  finish_diagnostics(model, theta, cdot);
  return model;
}

SindyModel solve_sr3(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cdot,
                     const LibrarySpec& library, const Sr3Options& options) {
  if (!(options.gamma >= 0.0) || !(options.kappa > 0.0) || options.max_iter < 1 || !(options.tol > 0.0))
    throw Error(ErrorKind::invalid_argument, "invalid SR3 options");
  const Design design = make_design(theta, cdot, options.normalize);
  const Eigen::Index d = theta.rows();
  const Eigen::Index m = cdot.rows();

  Eigen::MatrixXd system = design.t.transpose() * design.t;
  system.diagonal().array() += options.kappa;
  const Eigen::LLT<Eigen::MatrixXd> factor(system);
  if (factor.info() != Eigen::Success)
    throw Error(ErrorKind::rank_deficient, "SR3 system is not positive definite");

  const Eigen::MatrixXd rhs = design.t.transpose() * cdot.transpose();  // d x m
  const double shrink = options.gamma / options.kappa;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, m);
  Eigen::MatrixXd xi_relaxed(d, m);
  bool converged = false;
  int iter = 0;
  while (iter < options.max_iter) {
    ++iter;
    xi_relaxed = factor.solve(rhs + options.kappa * w);
    Eigen::MatrixXd w_next = xi_relaxed.unaryExpr([shrink](double z) { return soft_threshold(z, shrink); });
    const double change = (w_next - w).cwiseAbs().maxCoeff();
    w = std::move(w_next);
    if (change < options.tol) {
      converged = true;
      break;
    }
  }

  SindyModel model;
  model.library = library;
  model.solver = options;
  model.xi = w.transpose();
  for (Eigen::Index j = 0; j < d; ++j) model.xi.col(j) /= design.scale[j];
  model.diagnostics.iterations = iter;
  model.diagnostics.converged = converged;
  const Eigen::MatrixXd fit_residual = cdot.transpose() - design.t * xi_relaxed;
  model.diagnostics.relaxed_objective = 0.5 * fit_residual.squaredNorm() +
                                        options.gamma * w.cwiseAbs().sum() +
                                        0.5 * options.kappa * (xi_relaxed - w).squaredNorm();
  finish_diagnostics(model, theta, cdot);
  return model;
}

SindyModel solve(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& cdot,
                 const LibrarySpec& library, const SolverOptions& options) {
  if (const auto* stlsq = std::get_if<StlsqOptions>(&options))
    return solve_stlsq(theta, cdot, library, *stlsq);
  return solve_sr3(theta, cdot, library, std::get<Sr3Options>(options));
}

Eigen::VectorXd model_rhs(const SindyModel& model, const Eigen::VectorXd& c) {
  if (c.size() != model.m())
    throw Error(ErrorKind::dimension_mismatch, "coefficient vector length does not match model");
  return model.xi * evaluate_library(c, model.library);
}

namespace detail {
namespace {

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::config, where + ": " + what);
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    config_error(where + "." + key, "wrong type");
  }
}

}  // namespace

nlohmann::ordered_json library_to_json(const LibrarySpec& spec) {
  nlohmann::ordered_json trig = nlohmann::ordered_json::array();
  for (const auto& t : spec.trig)
    trig.push_back({{"kind", t.kind == TrigKind::sin ? "sin" : "cos"}, {"omega", t.omega}});
  return {{"constant", spec.include_constant}, {"poly_orders", sorted_orders(spec)}, {"trig", trig}};
}

LibrarySpec library_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) config_error(where, "expected an object");
  LibrarySpec spec;
  spec.include_constant = get_or(j, "constant", spec.include_constant, where);
  spec.poly_orders = get_or(j, "poly_orders", spec.poly_orders, where);
  if (j.contains("trig")) {
    if (!j["trig"].is_array()) config_error(where + ".trig", "expected an array");
    for (const auto& t : j["trig"]) {
      TrigTerm term;
      const auto kind = get_or<std::string>(t, "kind", "sin", where + ".trig");
      if (kind == "sin") term.kind = TrigKind::sin;
      else if (kind == "cos") term.kind = TrigKind::cos;
      else config_error(where + ".trig.kind", "must be sin or cos");
      term.omega = get_or(t, "omega", 1.0, where + ".trig");
      spec.trig.push_back(term);
    }
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    config_error(where, e.what());
  }
  return spec;
}

nlohmann::ordered_json solver_to_json(const SolverOptions& options) {
  if (const auto* s = std::get_if<StlsqOptions>(&options))
    return {{"name", "stlsq"}, {"threshold", s->threshold}, {"ridge", s->ridge},
            {"max_sweeps", s->max_sweeps}, {"normalize", s->normalize}};
  const auto& s = std::get<Sr3Options>(options);
  return {{"name", "sr3"}, {"gamma", s.gamma}, {"kappa", s.kappa}, {"max_iter", s.max_iter},
          {"tol", s.tol}, {"normalize", s.normalize}};
}

SolverOptions solver_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) config_error(where, "expected an object");
  const auto name = get_or<std::string>(j, "name", "sr3", where);
  if (name == "stlsq") {
    StlsqOptions s;
    s.threshold = get_or(j, "threshold", s.threshold, where);
    s.ridge = get_or(j, "ridge", s.ridge, where);
    s.max_sweeps = get_or(j, "max_sweeps", s.max_sweeps, where);
    s.normalize = get_or(j, "normalize", s.normalize, where);
    if (!(s.threshold >= 0.0)) config_error(where + ".threshold", "must be nonnegative");
    if (!(s.ridge >= 0.0)) config_error(where + ".ridge", "must be nonnegative");
    if (s.max_sweeps < 1) config_error(where + ".max_sweeps", "must be at least 1");
    return s;
  }
  if (name == "sr3") {
    Sr3Options s;
    s.gamma = get_or(j, "gamma", s.gamma, where);
    s.kappa = get_or(j, "kappa", s.kappa, where);
    s.max_iter = get_or(j, "max_iter", s.max_iter, where);
    s.tol = get_or(j, "tol", s.tol, where);
    s.normalize = get_or(j, "normalize", s.normalize, where);
    if (!(s.gamma >= 0.0)) config_error(where + ".gamma", "must be nonnegative");
    if (!(s.kappa > 0.0)) config_error(where + ".kappa", "must be positive");
    if (s.max_iter < 1) config_error(where + ".max_iter", "must be at least 1");
    if (!(s.tol > 0.0)) config_error(where + ".tol", "must be positive");
    return s;
  }
  config_error(where + ".name", "unknown solver '" + name + "' (expected sr3 or stlsq)");
}

}  // namespace detail

std::string model_to_json(const SindyModel& model) {
  nlohmann::ordered_json lib = detail::library_to_json(model.library);
  lib["functions"] = model.library.names(model.m());
  nlohmann::ordered_json xi = nlohmann::ordered_json::array();
  for (Eigen::Index p = 0; p < model.xi.rows(); ++p) {
    std::vector<double> row(model.xi.cols());
    for (Eigen::Index j = 0; j < model.xi.cols(); ++j) row[j] = model.xi(p, j);
    xi.push_back(row);
  }
  nlohmann::ordered_json diag{{"residual", model.diagnostics.residual},
                              {"nonzeros", model.diagnostics.nonzeros},
                              {"iterations", model.diagnostics.iterations},
                              {"converged", model.diagnostics.converged}};
  if (std::holds_alternative<Sr3Options>(model.solver))
    diag["relaxed_objective"] = model.diagnostics.relaxed_objective;
  nlohmann::ordered_json j{{"library", lib},
                           {"solver", detail::solver_to_json(model.solver)},
                           {"m", model.m()},
                           {"xi", xi},
                           {"diagnostics", diag}};
  return j.dump(2) + "\n";
}

SindyModel model_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string("model JSON: ") + e.what());
  }
  SindyModel model;
  model.library = detail::library_from_json(j.at("library"), "library");
  model.solver = detail::solver_from_json(j.at("solver"), "solver");
  const auto& rows = j.at("xi");
  const auto m = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = model.library.size(m);
  model.xi.resize(m, d);
  for (Eigen::Index p = 0; p < m; ++p) {
    const auto row = rows[static_cast<std::size_t>(p)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != d)
      throw Error(ErrorKind::parse, "model JSON: xi row length does not match library size");
    for (Eigen::Index k = 0; k < d; ++k) model.xi(p, k) = row[static_cast<std::size_t>(k)];
  }
  const auto& diag = j.value("diagnostics", nlohmann::json::object());
  model.diagnostics.residual = diag.value("residual", 0.0);
  model.diagnostics.nonzeros = diag.value("nonzeros", Eigen::Index{0});
  model.diagnostics.iterations = diag.value("iterations", 0);
  model.diagnostics.converged = diag.value("converged", true);
  model.diagnostics.relaxed_objective = diag.value("relaxed_objective", 0.0);
  return model;
}

}  // namespace netpod
