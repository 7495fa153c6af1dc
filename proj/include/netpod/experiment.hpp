#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "netpod/analysis.hpp"
#include "netpod/dynamics.hpp"
#include "netpod/error.hpp"
#include "netpod/graph.hpp"
#include "netpod/predict.hpp"

namespace netpod {

inline constexpr const char* kVersion = "0.1.0";

struct TreeSource {
  int branching = 2;
  int height = 4;
};
struct PathSource {
  int n = 10;
};
struct EdgeListSource {
  std::filesystem::path path;
  bool directed = false;
};
struct DatasetSource {
  std::string name;
};
using GraphSource = std::variant<SbmSpec, TreeSource, PathSource, EdgeListSource, DatasetSource>;

enum class DynamicsModel { sis, consensus };

struct ExperimentConfig {
  std::optional<GraphSource> graph;  // absent only when a trajectory input is given
  double weight_scale = 1.0;

  DynamicsModel model = DynamicsModel::sis;
  std::uint64_t dynamics_seed = 1;
  std::optional<Eigen::VectorXd> x0;     // sampled when absent
  std::optional<Eigen::VectorXd> delta;  // sampled when absent (SIS)

  double dt = 10.0 / 199.0;
  Eigen::Index snapshots = 200;
  int substeps = 10;

  PipelineConfig pipeline;

  int cluster_k = 4;
  std::uint64_t cluster_seed = 0;
  std::vector<ClusterSource> cluster_sources{ClusterSource::adjacency, ClusterSource::snapshot};
  LaplacianKind cluster_laplacian = LaplacianKind::unnormalized;

  std::optional<Eigen::VectorXd> rho;  // default_rho when absent
  long surrogate_max_sweeps = 200000;
  double surrogate_tol = 1e-8;

  std::optional<std::filesystem::path> trajectory_input;
  std::filesystem::path output_directory = "out";
};

/// Parses and validates a JSON config. Relative paths resolve against
/// `base_dir`. Throws Error(config) with a "line N:" anchor.
ExperimentConfig parse_config(std::string_view text,
                              const std::filesystem::path& base_dir = ".");

/// Every field with defaults filled in; re-parsing it yields the same config.
std::string materialize_config(const ExperimentConfig& cfg);

/// Applies a command-line seed to every seeded stage.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

Graph build_graph(const ExperimentConfig& cfg);

/// Ground-truth trajectory: simulated, or read from the trajectory input.
Trajectory simulate(const ExperimentConfig& cfg, const Graph& graph);

struct RunOptions {
  std::string format = "csv";  // trajectory / report table format: csv | json
  bool record_timings = false;  // timings make the manifest run-dependent
};

struct RunOutput {
  std::vector<std::filesystem::path> files;  // relative to the output directory
};

RunOutput cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out,
                       const RunOptions& options = {});
RunOutput cmd_predict(const ExperimentConfig& cfg, const std::filesystem::path& out,
                      const RunOptions& options = {});
RunOutput cmd_cluster(const ExperimentConfig& cfg, const std::filesystem::path& out,
                      const RunOptions& options = {});
RunOutput cmd_surrogate(const ExperimentConfig& cfg, const std::filesystem::path& out,
                        const RunOptions& options = {});

/// Collects metrics.json from each input directory into one summary table.
RunOutput cmd_report(const std::vector<std::filesystem::path>& inputs,
                     const std::filesystem::path& out, const RunOptions& options = {});

/// Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 I/O error.
int exit_code_for(const Error& error) noexcept;

struct CliArgs {
  std::string command;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::vector<std::filesystem::path> inputs;  // report
  RunOptions options;
};

/// Runs one subcommand; errors are reported on `err` and mapped to exit codes.
int run_cli(const CliArgs& args, std::ostream& err);

}  // namespace netpod
