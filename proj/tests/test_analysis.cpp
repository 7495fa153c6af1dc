#include "doctest.h"
#include "netpod/analysis.hpp"
#include "netpod/dynamics.hpp"
#include "netpod/error.hpp"
#include "test_util.hpp"

#include <cmath>
#include <set>

using namespace netpod;
using testutil::max_abs;

namespace {

Graph two_triangles() { return generate_sbm(SbmSpec{{3, 3}, 1.0, 0.0, 1.0, false, 0}); }

}  // namespace

TEST_CASE("laplacian eigendecomposition") {
  const EigenDecomposition one = eigh_laplacian(generate_path(1));
  CHECK(one.values.size() == 1);
  CHECK(one.values[0] == 0.0);
  CHECK(one.vectors(0, 0) == 1.0);

  const EigenDecomposition two = eigh_laplacian(generate_path(2));
  CHECK(std::abs(two.values[0]) < 1e-15);
  CHECK(two.values[1] == doctest::Approx(2.0));

  const EigenDecomposition path = eigh_laplacian(generate_path(4));
  const double pi = std::acos(-1.0);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(path.values[k] - (2 - 2 * std::cos(k * pi / 4))) < 1e-10);

  const Graph karate = load_dataset("karate");
  const EigenDecomposition e = eigh_laplacian(karate);
  const Eigen::MatrixXd l = laplacian(karate);
  CHECK(max_abs(l * e.vectors - e.vectors * e.values.asDiagonal()) <= 1e-8);
  CHECK(max_abs(e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(34, 34)) <= 1e-10);
  for (int k = 1; k < 34; ++k) CHECK(e.values[k] >= e.values[k - 1]);
  CHECK((e.values.array() < 1e-8).count() == 1);
  CHECK((eigh_laplacian(two_triangles()).values.array() < 1e-8).count() == 2);

  try {
    eigh_laplacian(generate_sbm(SbmSpec{{3}, 1.0, 0.0, 1.0, true, 0}));
    FAIL("expected unsupported");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::unsupported);
  }
}

TEST_CASE("normalized laplacian") {
  const Graph g = load_dataset("florentine");
  const Eigen::MatrixXd ln = normalized_laplacian(g);
  CHECK(max_abs(ln - ln.transpose()) < 1e-15);
  CHECK(max_abs(ln.diagonal().array() - 1.0) == 0.0);
  const Eigen::VectorXd sqrt_deg = g.in_strength().cwiseSqrt();
  CHECK(max_abs(ln * sqrt_deg) < 1e-12);
}

TEST_CASE("k-means") {
  Eigen::MatrixXd pts(6, 2);
  pts << 0, 0, 0.1, 0, 0, 0.1, 5, 5, 5.1, 5, 5, 5.1;
  const KMeansResult r = kmeans(pts, 2, 3);
  CHECK(r.labels == std::vector<int>{0, 0, 0, 1, 1, 1});
  CHECK(r.centers(0, 0) == doctest::Approx(0.1 / 3));
  double inertia = 0;
  for (int i = 0; i < 6; ++i) inertia += (pts.row(i) - r.centers.row(r.labels[i])).squaredNorm();
  CHECK(r.inertia == doctest::Approx(inertia));

  const Eigen::MatrixXd cloud = testutil::random_matrix(80, 3, 17);
  const KMeansResult a = kmeans(cloud, 5, 9);
  const KMeansResult b = kmeans(cloud, 5, 9);
  CHECK(a.labels == b.labels);
  CHECK(a.inertia == b.inertia);
  for (std::size_t i = 1; i < a.inertia_trace.size(); ++i) CHECK(a.inertia_trace[i] <= a.inertia_trace[i - 1] + 1e-12);
  // Canonical order: labels first appear as 0, 1, 2, ...
  int next = 0;
  for (int l : a.labels) {
    CHECK(l <= next);
    if (l == next) ++next;
  }
  CHECK(next == 5);
  // Best of ten restarts is no worse than the first restart alone.
  CHECK(kmeans(cloud, 5, 9, KMeansOptions{1, 300}).inertia >= a.inertia);

  CHECK_THROWS_AS(kmeans(cloud, 0, 1), Error);
  CHECK_THROWS_AS(kmeans(cloud, 81, 1), Error);
  // Two distinct points cannot fill three clusters.
  Eigen::MatrixXd dup(4, 1);
  dup << 1, 1, 2, 2;
  CHECK_THROWS_AS(kmeans(dup, 3, 1), Error);
}

TEST_CASE("spectral clustering on the adjacency") {
  const Graph g = two_triangles();
  const ClusterAssignment one = spectral_cluster(g.adjacency(), 1, 0, ClusterSource::adjacency);
  CHECK(one.labels == std::vector<int>(6, 0));
  const ClusterAssignment two = spectral_cluster(g.adjacency(), 2, 0, ClusterSource::adjacency);
  CHECK(two.labels == std::vector<int>{0, 0, 0, 1, 1, 1});
  CHECK(two.embedding.cols() == 2);
  CHECK(clusters_connected(g, two.labels));
  const ClusterAssignment sym =
      spectral_cluster(g.adjacency(), 2, 0, ClusterSource::adjacency, LaplacianKind::symmetric);
  CHECK(sym.labels == two.labels);
  CHECK_THROWS_AS(spectral_cluster(g.adjacency(), 7, 0, ClusterSource::adjacency), Error);
}

TEST_CASE("spectral clustering on snapshots") {
  const Graph tree = generate_balanced_tree(2, 4);
  const SisParams p(tree, sample_curing_rates(tree.n(), 1));
  const Trajectory t = integrate_rk4([&p](const Eigen::VectorXd& x) { return sis_rhs(p, x); },
                                     sample_initial_sis(tree.n(), 1), 10.0 / 199, 199, 10);
  const ClusterAssignment c = spectral_cluster(t.states, 3, 0, ClusterSource::snapshot);
  CHECK(c.source == ClusterSource::snapshot);
  CHECK(std::set<int>(c.labels.begin(), c.labels.end()).size() == 3);
  const DistanceContrast d = trajectory_distance_contrast(t.states, c.labels);
  CHECK(d.within < d.between);
  CHECK(spectral_cluster(t.states, 3, 0, ClusterSource::snapshot).labels == c.labels);
}

TEST_CASE("cluster connectivity") {
  const Graph path = generate_path(5);
  CHECK(clusters_connected(path, {0, 0, 1, 1, 1}));
  CHECK_FALSE(clusters_connected(path, {0, 1, 0, 1, 1}));
  CHECK(clusters_connected(path, {0, 1, 2, 3, 4}));
  CHECK_THROWS_AS(clusters_connected(path, {0, 1}), Error);
}
