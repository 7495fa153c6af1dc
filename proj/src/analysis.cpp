#include "netpod/analysis.hpp"

#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include <Eigen/Eigenvalues>

#include "netpod/error.hpp"
#include "netpod/pod.hpp"
#include "netpod/rng.hpp"

namespace netpod {
namespace {

void require_undirected(const Graph& g) {
  if (g.directed()) throw Error(ErrorKind::unsupported, "Laplacian spectra need an undirected graph");
}

EigenDecomposition eigh(const Eigen::MatrixXd& symmetric) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorKind::non_finite, "symmetric eigendecomposition failed");
  EigenDecomposition out{solver.eigenvalues(), solver.eigenvectors()};
  canonicalize_signs(out.vectors);
  return out;
}

std::vector<int> canonical_order(const std::vector<int>& labels, int k) {
  std::vector<int> remap(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int l : labels)
    if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = next++;
  return remap;
}

struct Attempt {
  std::vector<int> labels;
  Eigen::MatrixXd centers;
  double inertia = 0.0;
  std::vector<double> trace;
  bool ok = false;
};

Attempt lloyd(const Eigen::MatrixXd& points, int k, CounterRng& rng, int max_iter) {
  const Eigen::Index n = points.rows();
  Attempt a;
  // k-means++ seeding.
  a.centers.resize(k, points.cols());
  auto first = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n));
  a.centers.row(0) = points.row(std::min(first, n - 1));
  Eigen::VectorXd d2 = (points.rowwise() - a.centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::min(static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n)), n - 1);
    }
    a.centers.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - a.centers.row(c)).rowwise().squaredNorm());
  }

  a.labels.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (points.row(i) - a.centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (a.labels[static_cast<std::size_t>(i)] != best) changed = true;
      a.labels[static_cast<std::size_t>(i)] = best;
      inertia += best_d;
    }
    a.trace.push_back(inertia);
    a.inertia = inertia;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(a.labels[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[a.labels[static_cast<std::size_t>(i)]];
    }
    if ((counts.array() == 0).any()) return a;  // empty cluster: this restart fails
    for (int c = 0; c < k; ++c) a.centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
    if (!changed) break;
  }
  // Inertia against the final centers.
  a.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    a.inertia += (points.row(i) - a.centers.row(a.labels[static_cast<std::size_t>(i)])).squaredNorm();
  if (a.inertia < a.trace.back()) a.trace.push_back(a.inertia);
  a.ok = true;
  return a;
}

}  // namespace

EigenDecomposition eigh_laplacian(const Graph& g) {
  require_undirected(g);
  return eigh(laplacian(g));
}

Eigen::MatrixXd normalized_laplacian(const Graph& g) {
  require_undirected(g);
  const Eigen::VectorXd deg = g.in_strength();
  Eigen::VectorXd inv_sqrt(deg.size());
  for (Eigen::Index i = 0; i < deg.size(); ++i) inv_sqrt[i] = deg[i] > 0.0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
  Eigen::MatrixXd l = -(inv_sqrt.asDiagonal() * g.adjacency() * inv_sqrt.asDiagonal());
  l.diagonal().array() += 1.0;
  return l;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  const Eigen::Index n = points.rows();
  if (n == 0 || points.cols() == 0) throw Error(ErrorKind::invalid_argument, "k-means needs a nonempty point set");
  if (k < 1 || k > n)
    throw Error(ErrorKind::invalid_argument,
                "cluster count " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  if (options.restarts < 1 || options.max_iter < 1)
    throw Error(ErrorKind::invalid_argument, "k-means needs at least one restart and one iteration");
  if (!points.allFinite()) throw Error(ErrorKind::non_finite, "k-means input has non-finite entries");

  Attempt best;
  for (int r = 0; r < options.restarts; ++r) {
    CounterRng rng(seed, static_cast<std::uint32_t>(RngStream::kmeans) + static_cast<std::uint32_t>(r));
    Attempt a = lloyd(points, k, rng, options.max_iter);
    if (a.ok && (!best.ok || a.inertia < best.inertia)) best = std::move(a);
  }
  if (!best.ok)
    throw Error(ErrorKind::domain,
                "k-means left a cluster empty in all " + std::to_string(options.restarts) + " restarts");

  const std::vector<int> remap = canonical_order(best.labels, k);
  KMeansResult out;
  out.labels.reserve(best.labels.size());
  for (int l : best.labels) out.labels.push_back(remap[static_cast<std::size_t>(l)]);
  out.centers.resize(k, points.cols());
  for (int c = 0; c < k; ++c) out.centers.row(remap[static_cast<std::size_t>(c)]) = best.centers.row(c);
  out.inertia = best.inertia;
  out.inertia_trace = std::move(best.trace);
  return out;
}

const char* to_string(ClusterSource source) noexcept {
  return source == ClusterSource::adjacency ? "adjacency" : "snapshot";
}

ClusterAssignment spectral_cluster(const Eigen::MatrixXd& features, int k, std::uint64_t seed,
                                   ClusterSource source, LaplacianKind laplacian_kind) {
  const Eigen::Index n = features.rows();
  if (n == 0 || features.cols() == 0) throw Error(ErrorKind::invalid_argument, "empty feature matrix");
  if (k < 1 || k > n)
    throw Error(ErrorKind::invalid_argument,
                "cluster count " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");

  ClusterAssignment out;
  out.k = k;
  out.source = source;
  if (source == ClusterSource::adjacency) {
    if (features.cols() != n) throw Error(ErrorKind::dimension_mismatch, "adjacency must be square");
    const Graph g = Graph::from_adjacency(features, false);
    if (laplacian_kind == LaplacianKind::unnormalized) {
      out.embedding = eigh(laplacian(g)).vectors.leftCols(k);
    } else {
      out.embedding = eigh(normalized_laplacian(g)).vectors.leftCols(k);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = out.embedding.row(i).norm();
        if (norm > 0.0) out.embedding.row(i) /= norm;
      }
    }
  } else {
    const ThinSvd svd = thin_svd(features);
    if (k > svd.u.cols())
      throw Error(ErrorKind::invalid_argument,
                  "snapshot clustering needs k <= min(N, K) = " + std::to_string(svd.u.cols()));
    out.embedding = svd.u.leftCols(k);
  }
  const KMeansResult km = kmeans(out.embedding, k, seed);
  out.labels = km.labels;
  out.inertia = km.inertia;
  return out;
}

bool clusters_connected(const Graph& g, const std::vector<int>& labels) {
  const Eigen::Index n = g.n();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw Error(ErrorKind::dimension_mismatch, "label count does not match node count");
  const Eigen::MatrixXd& a = g.adjacency();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::vector<bool> label_done;
  for (Eigen::Index start = 0; start < n; ++start) {
    const int label = labels[static_cast<std::size_t>(start)];
    if (label < 0) throw Error(ErrorKind::invalid_argument, "negative cluster label");
    if (static_cast<std::size_t>(label) >= label_done.size()) label_done.resize(label + 1, false);
    if (seen[static_cast<std::size_t>(start)]) continue;
    // First unseen node of a label already explored means a second component.
    if (label_done[static_cast<std::size_t>(label)]) return false;
    label_done[static_cast<std::size_t>(label)] = true;
    std::queue<Eigen::Index> frontier;
    frontier.push(start);
    seen[static_cast<std::size_t>(start)] = true;
    while (!frontier.empty()) {
      const Eigen::Index u = frontier.front();
      frontier.pop();
      for (Eigen::Index v = 0; v < n; ++v) {
        if (seen[static_cast<std::size_t>(v)] || labels[static_cast<std::size_t>(v)] != label) continue;
        if (a(u, v) != 0.0 || a(v, u) != 0.0) {
          seen[static_cast<std::size_t>(v)] = true;
          frontier.push(v);
        }
      }
    }
  }
  return true;
}

DistanceContrast trajectory_distance_contrast(const Eigen::MatrixXd& states, const std::vector<int>& labels) {
  const Eigen::Index n = states.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw Error(ErrorKind::dimension_mismatch, "label count does not match node count");
  double within = 0.0, between = 0.0;
  long n_within = 0, n_between = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (states.row(i) - states.row(j)).norm();
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        within += d;
        ++n_within;
      } else {
        between += d;
        ++n_between;
      }
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {n_within > 0 ? within / static_cast<double>(n_within) : nan,
          n_between > 0 ? between / static_cast<double>(n_between) : nan};
}

}  // namespace netpod
