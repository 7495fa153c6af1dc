#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace netpod {

/// Weighted network. Entry (i, j) of the adjacency is the weight of the link
/// from node j to node i. Immutable once built; the factory enforces
/// nonnegative weights, a zero diagonal and, for undirected graphs, exact
/// symmetry.
class Graph {
 public:
  static Graph from_adjacency(Eigen::MatrixXd adjacency, bool directed,
                              std::vector<std::string> labels = {});

  Eigen::Index n() const noexcept { return adjacency_.rows(); }
  const Eigen::MatrixXd& adjacency() const noexcept { return adjacency_; }
  bool directed() const noexcept { return directed_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  /// Directed: nonzero entries. Undirected: nonzero entries above the diagonal.
  std::size_t edge_count() const;

  /// Row sums: total incoming weight per node.
  Eigen::VectorXd in_strength() const { return adjacency_.rowwise().sum(); }

  /// Same topology with every weight multiplied by `factor` (> 0).
  Graph scaled(double factor) const;

 private:
  Graph(Eigen::MatrixXd adjacency, bool directed, std::vector<std::string> labels)
      : adjacency_(std::move(adjacency)), directed_(directed), labels_(std::move(labels)) {}

  Eigen::MatrixXd adjacency_;
  bool directed_;
  std::vector<std::string> labels_;
};

struct SbmSpec {
  std::vector<int> block_sizes;
  double p_intra = 0.3;
  double p_inter = 0.02;
  double edge_weight = 0.05;
  bool directed = true;
  std::uint64_t seed = 0;
};

/// One Philox draw per ordered pair (per unordered pair when undirected), so
/// the adjacency is a pure function of the spec.
Graph generate_sbm(const SbmSpec& spec);

/// Block index of every node, in the order generate_sbm lays them out.
std::vector<int> sbm_block_of(const SbmSpec& spec);

Graph generate_balanced_tree(int branching, int height);

Graph generate_path(int n);

/// Parses "src dst [weight]" lines. `# nodes: N` and `# directed: true|false`
/// comment lines, when present, override the node count and `directed`.
Graph load_edge_list(std::string_view text, bool directed = false);

std::string serialize_edge_list(const Graph& g);

/// Bundled datasets: "karate" and "florentine".
Graph load_dataset(std::string_view name);
std::optional<std::string_view> dataset_edge_text(std::string_view name);

/// L = D - A with D the diagonal of row sums. Undirected graphs only.
Eigen::MatrixXd laplacian(const Graph& g);

}  // namespace netpod
