#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netpod/graph.hpp"

namespace netpod {

struct EigenDecomposition {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns, same sign convention as thin_svd
};

EigenDecomposition eigh_laplacian(const Graph& g);

/// Symmetric normalized Laplacian I - D^{-1/2} A D^{-1/2}; isolated nodes get a
/// unit diagonal.
Eigen::MatrixXd normalized_laplacian(const Graph& g);

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 300;
};

struct KMeansResult {
  std::vector<int> labels;  // canonical: clusters numbered by first occurrence
  Eigen::MatrixXd centers;  // k x F, rows in canonical label order
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // per Lloyd iteration of the winning restart
};

/// k-means++ seeding and Lloyd iterations, best of `restarts` by inertia.
/// Restart r draws from Philox stream kmeans + r of `seed`.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

enum class ClusterSource { adjacency, snapshot };
enum class LaplacianKind { unnormalized, symmetric };

const char* to_string(ClusterSource source) noexcept;

struct ClusterAssignment {
  std::vector<int> labels;
  int k = 0;
  double inertia = 0.0;
  ClusterSource source = ClusterSource::adjacency;
  Eigen::MatrixXd embedding;  // N x k node coordinates fed to k-means
};

/// Adjacency source: `features` is an N x N symmetric adjacency; nodes are
/// embedded by the k Laplacian eigenvectors with smallest eigenvalues.
/// Snapshot source: `features` is an N x K snapshot matrix; nodes are
/// embedded by the first k left-singular vectors.
ClusterAssignment spectral_cluster(const Eigen::MatrixXd& features, int k, std::uint64_t seed,
                                   ClusterSource source,
                                   LaplacianKind laplacian = LaplacianKind::unnormalized);

/// True when every cluster induces a connected subgraph.
bool clusters_connected(const Graph& g, const std::vector<int>& labels);

struct DistanceContrast {
  double within = 0.0;   // mean Euclidean distance between rows in the same cluster
  double between = 0.0;  // mean distance between rows in different clusters
};

DistanceContrast trajectory_distance_contrast(const Eigen::MatrixXd& states,
                                              const std::vector<int>& labels);

}  // namespace netpod
