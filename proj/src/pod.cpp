#include "netpod/pod.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/SVD>

#include "json.hpp"
#include "netpod/error.hpp"
#include "netpod/io.hpp"

namespace netpod {
namespace {

constexpr Eigen::Index kJacobiLimit = 64;

template <typename Svd>
ThinSvd unpack(const Svd& svd) {
  return ThinSvd{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

}  // namespace

void canonicalize_signs(Eigen::MatrixXd& vectors, Eigen::MatrixXd* companion) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index pivot = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double mag = std::abs(vectors(i, j));
      if (mag > best) {
        best = mag;
        pivot = i;
      }
    }
    if (vectors.rows() > 0 && vectors(pivot, j) < 0.0) {
      vectors.col(j) = -vectors.col(j);
      if (companion != nullptr) companion->col(j) = -companion->col(j);
    }
  }
}

ThinSvd thin_svd(const Eigen::MatrixXd& x) {
  if (x.size() == 0) throw Error(ErrorKind::invalid_argument, "SVD of an empty matrix");
  if (!x.allFinite()) throw Error(ErrorKind::non_finite, "SVD input has non-finite entries");
  ThinSvd out;
  if (std::min(x.rows(), x.cols()) <= kJacobiLimit) {
    out = unpack(Eigen::JacobiSVD<Eigen::MatrixXd>(x, Eigen::ComputeThinU | Eigen::ComputeThinV));
  } else {
    out = unpack(Eigen::BDCSVD<Eigen::MatrixXd>(x, Eigen::ComputeThinU | Eigen::ComputeThinV));
  }
  canonicalize_signs(out.u, &out.v);
  return out;
}

Eigen::Index select_modes(const Eigen::VectorXd& sigma, const ModePolicy& policy) {
  const Eigen::Index r = sigma.size();
  if (r == 0) throw Error(ErrorKind::invalid_argument, "no singular values");
  for (Eigen::Index p = 1; p < r; ++p)
    if (sigma[p] > sigma[p - 1]) throw Error(ErrorKind::invalid_argument, "singular values must be nonincreasing");

  if (const auto* fixed = std::get_if<FixedModes>(&policy)) {
    if (fixed->m < 1) throw Error(ErrorKind::invalid_argument, "mode count must be at least 1");
    return std::min(fixed->m, r);
  }
  const double eps = std::get<EnergyThreshold>(policy).epsilon;
  if (!(eps > 0.0 && eps < 1.0)) throw Error(ErrorKind::invalid_argument, "energy threshold must lie in (0, 1)");
  const double total = sigma.squaredNorm();
  if (total == 0.0) return 1;
  double captured = 0.0;
  for (Eigen::Index p = 0; p < r; ++p) {
    captured += sigma[p] * sigma[p];
    if (captured >= (1.0 - eps) * total) return p + 1;
  }
  return r;
}

PodBasis compute_basis(const SnapshotMatrix& snapshots, const ModePolicy& policy, bool center) {
  const auto& x = snapshots.states;
  if (x.cols() < 2) throw Error(ErrorKind::insufficient_data, "snapshot matrix needs at least two columns");
  PodBasis basis;
  basis.mean = Eigen::VectorXd::Zero(x.rows());
  ThinSvd svd;
  if (center) {
    basis.mean = x.rowwise().mean();
    svd = thin_svd(x.colwise() - basis.mean);
  } else {
    svd = thin_svd(x);
  }
  const Eigen::Index m = select_modes(svd.sigma, policy);
  basis.modes = svd.u.leftCols(m);
  basis.sigma = svd.sigma;
  return basis;
}

namespace {

void check_rows(const PodBasis& basis, Eigen::Index rows) {
  if (rows != basis.nodes())
    throw Error(ErrorKind::dimension_mismatch, "state length " + std::to_string(rows) +
                                                   " does not match basis size " +
                                                   std::to_string(basis.nodes()));
}

void check_coeffs(const PodBasis& basis, Eigen::Index rows) {
  if (rows != basis.m())
    throw Error(ErrorKind::dimension_mismatch, "coefficient length " + std::to_string(rows) +
                                                   " does not match mode count " +
                                                   std::to_string(basis.m()));
}

}  // namespace

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& x) {
  check_rows(basis, x.size());
  return basis.modes.transpose() * (x - basis.mean);
}

Eigen::MatrixXd project(const PodBasis& basis, const Eigen::MatrixXd& x) {
  check_rows(basis, x.rows());
  return basis.modes.transpose() * (x.colwise() - basis.mean);
}

CoeffSeries project(const PodBasis& basis, const SnapshotMatrix& snapshots) {
  return CoeffSeries{project(basis, snapshots.states), snapshots.dt};
}

Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& c) {
  check_coeffs(basis, c.size());
  return basis.modes * c + basis.mean;
}

Eigen::MatrixXd reconstruct(const PodBasis& basis, const Eigen::MatrixXd& c) {
  check_coeffs(basis, c.rows());
  return (basis.modes * c).colwise() + basis.mean;
}

Eigen::MatrixXd reconstruct(const PodBasis& basis, const CoeffSeries& coeffs) {
  return reconstruct(basis, coeffs.c);
}

std::string basis_to_text(const PodBasis& basis, Eigen::Index snapshots, double dt) {
  const bool centered = !basis.mean.isZero(0.0);
  nlohmann::ordered_json header{{"N", basis.nodes()},
                                {"K", snapshots},
                                {"m", basis.m()},
                                {"dt", dt},
                                {"t_obs", static_cast<double>(snapshots - 1) * dt},
                                {"centered", centered}};
  std::string out = header.dump() + "\n# modes\n";
  for (Eigen::Index i = 0; i < basis.nodes(); ++i) {
    for (Eigen::Index p = 0; p < basis.m(); ++p) {
      if (p > 0) out += ',';
      out += format_double(basis.modes(i, p));
    }
    out += '\n';
  }
  out += "# sigma\n";
  for (Eigen::Index p = 0; p < basis.sigma.size(); ++p) out += format_double(basis.sigma[p]) + '\n';
  if (centered) {
    out += "# mean\n";
    for (Eigen::Index i = 0; i < basis.nodes(); ++i) out += format_double(basis.mean[i]) + '\n';
  }
  return out;
}

PodBasis basis_from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing basis header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("bad basis header: ") + e.what());
  }
  const auto n = header.at("N").get<Eigen::Index>();
  const auto m = header.at("m").get<Eigen::Index>();
  PodBasis basis;
  basis.modes.resize(n, m);
  basis.mean = Eigen::VectorXd::Zero(n);
  std::vector<double> sigma;
  std::string section;
  Eigen::Index row = 0, mean_row = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      section = line.substr(2);
      continue;
    }
    std::vector<double> values;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      try {
        values.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw ParseError(line_no, "bad number '" + field + "'");
      }
    }
    if (section == "modes") {
      if (row >= n || static_cast<Eigen::Index>(values.size()) != m)
        throw ParseError(line_no, "unexpected mode row");
      for (Eigen::Index p = 0; p < m; ++p) basis.modes(row, p) = values[p];
      ++row;
    } else if (section == "sigma" && values.size() == 1) {
      sigma.push_back(values[0]);
    } else if (section == "mean" && values.size() == 1 && mean_row < n) {
      basis.mean[mean_row++] = values[0];
    } else {
      throw ParseError(line_no, "unexpected line in section '" + section + "'");
    }
  }
  if (row != n) throw ParseError(line_no, "expected " + std::to_string(n) + " mode rows");
  basis.sigma = Eigen::Map<Eigen::VectorXd>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
  return basis;
}

}  // namespace netpod
