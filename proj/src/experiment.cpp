#include "netpod/experiment.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>

#include "json.hpp"
#include "json_util.hpp"
#include "netpod/error.hpp"
#include "netpod/io.hpp"
#include "netpod/rng.hpp"

namespace netpod {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Line lookup for config paths such as "graph.sbm.p_intra" or "dynamics.x0[3]".
// The text is known to be valid JSON when this runs.

std::map<std::string, std::size_t> index_lines(std::string_view text) {
  struct Frame {
    bool object;
    std::string path;
    std::string key;
    std::size_t index = 0;
    bool expecting_key = true;
    bool element_seen = false;
  };
  std::map<std::string, std::size_t> lines;
  std::vector<Frame> stack;
  std::size_t line = 1;

  auto child_path = [&stack]() -> std::string {
    if (stack.empty()) return "";
    const Frame& f = stack.back();
    if (f.object) return f.path.empty() ? f.key : f.path + "." + f.key;
    return f.path + "[" + std::to_string(f.index) + "]";
  };
  auto value_starts = [&]() {
    if (!stack.empty() && !stack.back().object && !stack.back().element_seen) {
      stack.back().element_seen = true;
      lines.emplace(child_path(), line);
    }
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    switch (ch) {
      case '\n':
        ++line;
        break;
      case ' ':
      case '\t':
      case '\r':
        break;
      case '{':
      case '[': {
        value_starts();
        std::string path = child_path();
        stack.push_back(Frame{ch == '{', std::move(path), {}});
        break;
      }
      case '}':
      case ']':
        if (!stack.empty()) stack.pop_back();
        break;
      case ',':
        if (!stack.empty()) {
          if (stack.back().object) {
            stack.back().expecting_key = true;
          } else {
            ++stack.back().index;
            stack.back().element_seen = false;
          }
        }
        break;
      case ':':
        if (!stack.empty()) stack.back().expecting_key = false;
        break;
      case '"': {
        std::string raw;
        for (++i; i < text.size() && text[i] != '"'; ++i) {
          if (text[i] == '\\' && i + 1 < text.size()) ++i;
          raw += text[i];
        }
        if (!stack.empty() && stack.back().object && stack.back().expecting_key) {
          stack.back().key = raw;
          lines.emplace(child_path(), line);
        } else {
          value_starts();
        }
        break;
      }
      default:
        value_starts();
        break;
    }
  }
  return lines;
}

class Reader {
 public:
  Reader(std::map<std::string, std::size_t> lines, fs::path base_dir)
      : lines_(std::move(lines)), base_dir_(std::move(base_dir)) {}

  void set_prefix(std::string prefix) { prefix_ = std::move(prefix); }

  std::size_t line_of(std::string path) const {
    path = join(prefix_, path);
    while (!path.empty()) {
      if (auto it = lines_.find(path); it != lines_.end()) return it->second;
      const auto cut = path.find_last_of(".[");
      if (cut == std::string::npos) break;
      path.erase(cut);
    }
    return 1;
  }

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    throw Error(ErrorKind::config, "line " + std::to_string(line_of(path)) + ": " +
                                       (path.empty() ? "" : path + ": ") + what);
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  const json& object(const json& parent, const std::string& key, const std::string& path) const {
    const json& j = parent.at(key);
    if (!j.is_object()) fail(join(path, key), "expected an object");
    return j;
  }

  void allow_only(const json& obj, const std::string& path, std::initializer_list<const char*> keys) const {
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : obj.items())
      if (!allowed.count(item.key())) fail(join(path, item.key()), "unknown key");
  }

  double number(const json& obj, const char* key, const std::string& path, double fallback) const {
    if (!obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    if (!j.is_number()) fail(join(path, key), "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(join(path, key), "expected a finite number");
    return v;
  }

  long long integer(const json& obj, const char* key, const std::string& path, long long fallback) const {
    if (!obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    if (!j.is_number_integer()) fail(join(path, key), "expected an integer");
    return j.get<long long>();
  }

  std::uint64_t seed(const json& obj, const char* key, const std::string& path, std::uint64_t fallback) const {
    if (!obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    fail(join(path, key), "expected a nonnegative integer seed");
  }

  bool boolean(const json& obj, const char* key, const std::string& path, bool fallback) const {
    if (!obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    if (!j.is_boolean()) fail(join(path, key), "expected true or false");
    return j.get<bool>();
  }

  std::string string(const json& obj, const char* key, const std::string& path, std::string fallback) const {
    if (!obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    if (!j.is_string()) fail(join(path, key), "expected a string");
    return j.get<std::string>();
  }

  std::optional<Eigen::VectorXd> vector(const json& obj, const char* key, const std::string& path) const {
    if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
    const json& j = obj.at(key);
    const std::string here = join(path, key);
    if (!j.is_array() || j.empty()) fail(here, "expected a nonempty array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number() || !std::isfinite(j[i].get<double>()))
        fail(here + "[" + std::to_string(i) + "]", "expected a finite number");
      v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
  }

  fs::path existing_file(const json& obj, const char* key, const std::string& path) const {
    const json& j = obj.at(key);
    if (!j.is_string()) fail(join(path, key), "expected a file path");
    fs::path p = j.get<std::string>();
    if (p.is_relative()) p = base_dir_ / p;
    p = p.lexically_normal();
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) fail(join(path, key), "file not found: " + p.string());
    return p;
  }

  fs::path resolve(const fs::path& p) const { return p.is_relative() ? (base_dir_ / p).lexically_normal() : p; }

  // Re-anchors an Error(config) whose message starts with "<path>: ".
  [[noreturn]] void reanchor(const Error& e, const std::string& prefix) const {
    const std::string what = e.what();
    const auto colon = what.find(": ");
    const std::string path = colon == std::string::npos ? prefix : join(prefix, what.substr(0, colon));
    throw Error(ErrorKind::config, "line " + std::to_string(line_of(path)) + ": " + join(prefix, what));
  }

 private:
  std::map<std::string, std::size_t> lines_;
  fs::path base_dir_;
  std::string prefix_;
};

int checked_int(const Reader& r, long long v, const std::string& path, long long lo, long long hi) {
  if (v < lo || v > hi)
    r.fail(path, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(v);
}

GraphSource parse_graph_source(const Reader& r, const json& g, double& weight_scale) {
  const std::string path = "graph";
  r.allow_only(g, path, {"sbm", "balanced_tree", "path", "edge_list", "dataset", "weight_scale"});
  weight_scale = r.number(g, "weight_scale", path, 1.0);
  if (!(weight_scale > 0.0)) r.fail("graph.weight_scale", "must be positive");

  int sources = 0;
  for (const char* key : {"sbm", "balanced_tree", "path", "edge_list", "dataset"}) sources += g.contains(key) ? 1 : 0;
  if (sources != 1)
    r.fail(path, "exactly one of sbm, balanced_tree, path, edge_list, dataset is required");

  if (g.contains("sbm")) {
    const std::string p = "graph.sbm";
    const json& s = r.object(g, "sbm", path);
    r.allow_only(s, p, {"block_sizes", "p_intra", "p_inter", "edge_weight", "directed", "seed"});
    SbmSpec spec;
    if (!s.contains("block_sizes") || !s["block_sizes"].is_array() || s["block_sizes"].empty())
      r.fail(p + ".block_sizes", "expected a nonempty array of block sizes");
    for (std::size_t i = 0; i < s["block_sizes"].size(); ++i) {
      const json& b = s["block_sizes"][i];
      const std::string bp = p + ".block_sizes[" + std::to_string(i) + "]";
      if (!b.is_number_integer() || b.get<long long>() < 1 || b.get<long long>() > 100000)
        r.fail(bp, "block size must be a positive integer");
      spec.block_sizes.push_back(b.get<int>());
    }
    spec.p_intra = r.number(s, "p_intra", p, spec.p_intra);
    spec.p_inter = r.number(s, "p_inter", p, spec.p_inter);
    spec.edge_weight = r.number(s, "edge_weight", p, spec.edge_weight);
    spec.directed = r.boolean(s, "directed", p, spec.directed);
    spec.seed = r.seed(s, "seed", p, spec.seed);
    if (spec.p_intra < 0.0 || spec.p_intra > 1.0) r.fail(p + ".p_intra", "must lie in [0, 1]");
    if (spec.p_inter < 0.0 || spec.p_inter > 1.0) r.fail(p + ".p_inter", "must lie in [0, 1]");
    if (!(spec.edge_weight > 0.0)) r.fail(p + ".edge_weight", "must be positive");
    return spec;
  }
  if (g.contains("balanced_tree")) {
    const std::string p = "graph.balanced_tree";
    const json& t = r.object(g, "balanced_tree", path);
    r.allow_only(t, p, {"branching", "height"});
    TreeSource tree;
    tree.branching = checked_int(r, r.integer(t, "branching", p, tree.branching), p + ".branching", 1, 1000);
    tree.height = checked_int(r, r.integer(t, "height", p, tree.height), p + ".height", 0, 30);
    if (std::pow(static_cast<double>(tree.branching), tree.height) > 1e5) r.fail(p, "tree too large");
    return tree;
  }
  if (g.contains("path")) {
    const std::string p = "graph.path";
    const json& t = r.object(g, "path", path);
    r.allow_only(t, p, {"n"});
    return PathSource{checked_int(r, r.integer(t, "n", p, 10), p + ".n", 1, 100000)};
  }
  if (g.contains("edge_list")) {
    const std::string p = "graph.edge_list";
    const json& e = r.object(g, "edge_list", path);
    r.allow_only(e, p, {"path", "directed"});
    if (!e.contains("path")) r.fail(p, "missing key 'path'");
    return EdgeListSource{r.existing_file(e, "path", p), r.boolean(e, "directed", p, false)};
  }
  const std::string name = r.string(g, "dataset", path, "");
  if (!dataset_edge_text(name)) r.fail("graph.dataset", "unknown dataset '" + name + "' (expected karate or florentine)");
  return DatasetSource{name};
}

ModePolicy parse_modes(const Reader& r, const json& j, const std::string& path) {
  if (!j.is_object() || j.size() != 1 || !(j.contains("fixed") || j.contains("energy")))
    r.fail(path, "expected {\"fixed\": m} or {\"energy\": epsilon}");
  if (j.contains("fixed"))
    return FixedModes{checked_int(r, r.integer(j, "fixed", path, 2), path + ".fixed", 1, 100000)};
  const double eps = r.number(j, "energy", path, 0.01);
  if (!(eps > 0.0 && eps < 1.0)) r.fail(path + ".energy", "must lie in (0, 1)");
  return EnergyThreshold{eps};
}

ojson modes_to_json(const ModePolicy& policy) {
  if (const auto* f = std::get_if<FixedModes>(&policy)) return {{"fixed", f->m}};
  return {{"energy", std::get<EnergyThreshold>(policy).epsilon}};
}

ojson vector_json(const std::optional<Eigen::VectorXd>& v) {
  if (!v) return nullptr;
  return std::vector<double>(v->data(), v->data() + v->size());
}

ojson graph_to_json(const ExperimentConfig& cfg) {
  if (!cfg.graph) return nullptr;
  ojson g;
  std::visit(
      [&g](const auto& src) {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, SbmSpec>) {
          g["sbm"] = {{"block_sizes", src.block_sizes}, {"p_intra", src.p_intra}, {"p_inter", src.p_inter},
                      {"edge_weight", src.edge_weight}, {"directed", src.directed}, {"seed", src.seed}};
        } else if constexpr (std::is_same_v<T, TreeSource>) {
          g["balanced_tree"] = {{"branching", src.branching}, {"height", src.height}};
        } else if constexpr (std::is_same_v<T, PathSource>) {
          g["path"] = {{"n", src.n}};
        } else if constexpr (std::is_same_v<T, EdgeListSource>) {
          g["edge_list"] = {{"path", src.path.string()}, {"directed", src.directed}};
        } else {
          g["dataset"] = src.name;
        }
      },
      *cfg.graph);
  g["weight_scale"] = cfg.weight_scale;
  return g;
}

ojson config_to_json(const ExperimentConfig& cfg) {
  ojson sources = ojson::array();
  for (auto s : cfg.cluster_sources) sources.push_back(to_string(s));
  ojson simulation{{"dt", cfg.dt}, {"snapshots", cfg.snapshots}, {"substeps", cfg.substeps}};
  simulation["trajectory"] = cfg.trajectory_input ? ojson(cfg.trajectory_input->string()) : ojson(nullptr);
  return {
      {"graph", graph_to_json(cfg)},
      {"dynamics",
       {{"model", cfg.model == DynamicsModel::sis ? "sis" : "consensus"},
        {"seed", cfg.dynamics_seed},
        {"x0", vector_json(cfg.x0)},
        {"delta", vector_json(cfg.delta)}}},
      {"simulation", simulation},
      {"pipeline",
       {{"obs_fraction", cfg.pipeline.obs_fraction},
        {"modes", modes_to_json(cfg.pipeline.modes)},
        {"center", cfg.pipeline.center},
        {"library", detail::library_to_json(cfg.pipeline.library)},
        {"solver", detail::solver_to_json(cfg.pipeline.solver)},
        {"coeff_substeps", cfg.pipeline.coeff_substeps}}},
      {"cluster",
       {{"k", cfg.cluster_k},
        {"seed", cfg.cluster_seed},
        {"sources", sources},
        {"laplacian", cfg.cluster_laplacian == LaplacianKind::unnormalized ? "unnormalized" : "symmetric"}}},
      {"surrogate",
       {{"rho", vector_json(cfg.rho)}, {"max_sweeps", cfg.surrogate_max_sweeps}, {"tol", cfg.surrogate_tol}}},
      {"outputs", {{"directory", cfg.output_directory.string()}}},
  };
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    throw Error(ErrorKind::config, "line " + std::to_string(line) + ": malformed JSON");
  }
  Reader r(index_lines(text), base_dir);
  if (!root.is_object()) r.fail("", "config must be a JSON object");

  // A run manifest replays as its embedded config.
  if (root.contains("config") && root.contains("command")) {
    root = json(root["config"]);
    r.set_prefix("config");
    if (!root.is_object()) r.fail("", "expected an object");
  }
  r.allow_only(root, "", {"graph", "dynamics", "simulation", "pipeline", "cluster", "surrogate", "outputs"});
  ExperimentConfig cfg;

  if (root.contains("graph") && !root["graph"].is_null()) {
    if (!root["graph"].is_object()) r.fail("graph", "expected an object");
    cfg.graph = parse_graph_source(r, root["graph"], cfg.weight_scale);
  }

  if (root.contains("dynamics")) {
    const std::string p = std::string("dynamics");
    const json& d = r.object(root, "dynamics", "");
    r.allow_only(d, p, {"model", "seed", "x0", "delta"});
    const std::string model = r.string(d, "model", p, "sis");
    if (model == "sis") cfg.model = DynamicsModel::sis;
    else if (model == "consensus") cfg.model = DynamicsModel::consensus;
    else r.fail(p + ".model", "unknown model '" + model + "' (expected sis or consensus)");
    cfg.dynamics_seed = r.seed(d, "seed", p, cfg.dynamics_seed);
    cfg.x0 = r.vector(d, "x0", p);
    cfg.delta = r.vector(d, "delta", p);
    if (cfg.delta && (cfg.delta->array() < 0.0).any()) r.fail(p + ".delta", "curing rates must be nonnegative");
    if (cfg.delta && cfg.model == DynamicsModel::consensus) r.fail(p + ".delta", "only meaningful for sis");
  }

  if (root.contains("simulation")) {
    const std::string p = std::string("simulation");
    const json& s = r.object(root, "simulation", "");
    r.allow_only(s, p, {"dt", "snapshots", "substeps", "trajectory"});
    cfg.dt = r.number(s, "dt", p, cfg.dt);
    if (!(cfg.dt > 0.0)) r.fail(p + ".dt", "must be positive");
    cfg.snapshots = checked_int(r, r.integer(s, "snapshots", p, cfg.snapshots), p + ".snapshots", 2, 10000000);
    cfg.substeps = checked_int(r, r.integer(s, "substeps", p, cfg.substeps), p + ".substeps", 1, 1000000);
    if (s.contains("trajectory") && !s["trajectory"].is_null())
      cfg.trajectory_input = r.existing_file(s, "trajectory", p);
  }

  if (root.contains("pipeline")) {
    const std::string p = std::string("pipeline");
    const json& s = r.object(root, "pipeline", "");
    r.allow_only(s, p, {"obs_fraction", "modes", "center", "library", "solver", "coeff_substeps"});
    cfg.pipeline.obs_fraction = r.number(s, "obs_fraction", p, cfg.pipeline.obs_fraction);
    if (!(cfg.pipeline.obs_fraction > 0.0 && cfg.pipeline.obs_fraction < 1.0))
      r.fail(p + ".obs_fraction", "must lie in (0, 1)");
    if (s.contains("modes")) cfg.pipeline.modes = parse_modes(r, s["modes"], p + ".modes");
    cfg.pipeline.center = r.boolean(s, "center", p, cfg.pipeline.center);
    try {
      if (s.contains("library")) cfg.pipeline.library = detail::library_from_json(s["library"], "library");
      if (s.contains("solver")) cfg.pipeline.solver = detail::solver_from_json(s["solver"], "solver");
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::config) throw;
      r.reanchor(e, p);
    }
    cfg.pipeline.coeff_substeps =
        checked_int(r, r.integer(s, "coeff_substeps", p, cfg.pipeline.coeff_substeps), p + ".coeff_substeps", 1, 1000000);
  }

  if (root.contains("cluster")) {
    const std::string p = std::string("cluster");
    const json& c = r.object(root, "cluster", "");
    r.allow_only(c, p, {"k", "seed", "sources", "laplacian"});
    cfg.cluster_k = checked_int(r, r.integer(c, "k", p, cfg.cluster_k), p + ".k", 1, 1000000);
    cfg.cluster_seed = r.seed(c, "seed", p, cfg.cluster_seed);
    if (c.contains("sources")) {
      const json& s = c["sources"];
      if (!s.is_array() || s.empty()) r.fail(p + ".sources", "expected a nonempty array");
      cfg.cluster_sources.clear();
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::string name = s[i].is_string() ? s[i].get<std::string>() : "";
        if (name == "adjacency") cfg.cluster_sources.push_back(ClusterSource::adjacency);
        else if (name == "snapshot") cfg.cluster_sources.push_back(ClusterSource::snapshot);
        else r.fail(p + ".sources[" + std::to_string(i) + "]", "expected adjacency or snapshot");
      }
    }
    const std::string lap = r.string(c, "laplacian", p, "unnormalized");
    if (lap == "unnormalized") cfg.cluster_laplacian = LaplacianKind::unnormalized;
    else if (lap == "symmetric") cfg.cluster_laplacian = LaplacianKind::symmetric;
    else r.fail(p + ".laplacian", "expected unnormalized or symmetric");
  }

  if (root.contains("surrogate")) {
    const std::string p = std::string("surrogate");
    const json& s = r.object(root, "surrogate", "");
    r.allow_only(s, p, {"rho", "max_sweeps", "tol"});
    if (s.contains("rho") && s["rho"].is_number()) {
      const double rho = r.number(s, "rho", p, 0.0);
      if (rho < 0.0) r.fail(p + ".rho", "must be nonnegative");
      cfg.rho = Eigen::VectorXd::Constant(1, rho);  // broadcast once the node count is known
    } else {
      cfg.rho = r.vector(s, "rho", p);
      if (cfg.rho && (cfg.rho->array() < 0.0).any()) r.fail(p + ".rho", "must be nonnegative");
    }
    const long long sweeps = r.integer(s, "max_sweeps", p, cfg.surrogate_max_sweeps);
    if (sweeps < 1) r.fail(p + ".max_sweeps", "must be at least 1");
    cfg.surrogate_max_sweeps = static_cast<long>(sweeps);
    cfg.surrogate_tol = r.number(s, "tol", p, cfg.surrogate_tol);
    if (!(cfg.surrogate_tol > 0.0)) r.fail(p + ".tol", "must be positive");
  }

  if (root.contains("outputs")) {
    const std::string p = std::string("outputs");
    const json& o = r.object(root, "outputs", "");
    r.allow_only(o, p, {"directory"});
    cfg.output_directory = r.resolve(r.string(o, "directory", p, "out"));
  } else {
    cfg.output_directory = r.resolve(cfg.output_directory);
  }

  if (!cfg.graph && !cfg.trajectory_input)
    r.fail("", "a graph section or simulation.trajectory is required");
  return cfg;
}

std::string materialize_config(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.dynamics_seed = seed;
  cfg.cluster_seed = seed;
  if (cfg.graph)
    if (auto* sbm = std::get_if<SbmSpec>(&*cfg.graph)) sbm->seed = seed;
}

Graph build_graph(const ExperimentConfig& cfg) {
  if (!cfg.graph) throw Error(ErrorKind::config, "no graph section in config");
  Graph g = std::visit(
      [](const auto& src) -> Graph {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, SbmSpec>) return generate_sbm(src);
        else if constexpr (std::is_same_v<T, TreeSource>) return generate_balanced_tree(src.branching, src.height);
        else if constexpr (std::is_same_v<T, PathSource>) return generate_path(src.n);
        else if constexpr (std::is_same_v<T, EdgeListSource>) return load_edge_list(read_text_file(src.path), src.directed);
        else return load_dataset(src.name);
      },
      *cfg.graph);
  return cfg.weight_scale == 1.0 ? g : g.scaled(cfg.weight_scale);
}

namespace {

Eigen::VectorXd resolved_x0(const ExperimentConfig& cfg, Eigen::Index n) {
  if (cfg.x0) {
    if (cfg.x0->size() != n)
      throw Error(ErrorKind::config, "dynamics.x0 has " + std::to_string(cfg.x0->size()) +
                                         " entries but the graph has " + std::to_string(n) + " nodes");
    return *cfg.x0;
  }
  return sample_initial_sis(n, cfg.dynamics_seed);
}

Eigen::VectorXd resolved_delta(const ExperimentConfig& cfg, Eigen::Index n) {
  if (cfg.delta) {
    if (cfg.delta->size() != n)
      throw Error(ErrorKind::config, "dynamics.delta has " + std::to_string(cfg.delta->size()) +
                                         " entries but the network has " + std::to_string(n) + " nodes");
    return *cfg.delta;
  }
  return sample_curing_rates(n, cfg.dynamics_seed);
}

Eigen::VectorXd resolved_rho(const ExperimentConfig& cfg, Eigen::Index n, Eigen::Index k_obs) {
  if (!cfg.rho) return default_rho(n, k_obs);
  if (cfg.rho->size() == 1) return Eigen::VectorXd::Constant(n, (*cfg.rho)[0]);
  if (cfg.rho->size() != n)
    throw Error(ErrorKind::config, "surrogate.rho has " + std::to_string(cfg.rho->size()) +
                                       " entries but the network has " + std::to_string(n) + " nodes");
  return *cfg.rho;
}

// Wraps a stage so its errors name it.
template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    throw DivergenceError(e.step(), std::string(name) + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.what());
  }
}

class OutputDir {
 public:
  OutputDir(fs::path root, const char* command, const ExperimentConfig* cfg, const RunOptions& options)
      : root_(std::move(root)), command_(command), cfg_(cfg), options_(options),
        start_(std::chrono::steady_clock::now()) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create output directory " + root_.string() + ": " + ec.message());
  }

  void write(const std::string& name, std::string_view contents) {
    write_file_atomic(root_ / name, contents);
    files_.insert(name);
  }

  RunOutput finish(ojson extra = ojson::object()) {
    ojson manifest;
    manifest["command"] = command_;
    manifest["version"] = kVersion;
    manifest["rng"] = kRngAlgorithm;
    if (cfg_ != nullptr) {
      ojson seeds{{"dynamics", cfg_->dynamics_seed}, {"cluster", cfg_->cluster_seed}};
      if (cfg_->graph)
        if (const auto* sbm = std::get_if<SbmSpec>(&*cfg_->graph)) seeds["sbm"] = sbm->seed;
      manifest["seeds"] = seeds;
      manifest["config"] = config_to_json(*cfg_);
    }
    for (auto& item : extra.items()) manifest[item.key()] = item.value();
    manifest["outputs"] = std::vector<std::string>(files_.begin(), files_.end());
    if (options_.record_timings)
      manifest["timings_seconds"] = {
          {"total", std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()}};
    write_file_atomic(root_ / "manifest.json", manifest.dump(2) + "\n");
    RunOutput out;
    for (const auto& f : files_) out.files.emplace_back(f);
    out.files.emplace_back("manifest.json");
    return out;
  }

 private:
  fs::path root_;
  const char* command_;
  const ExperimentConfig* cfg_;
  RunOptions options_;
  std::chrono::steady_clock::time_point start_;
  std::set<std::string> files_;
};

void check_format(const RunOptions& options) {
  if (options.format != "csv" && options.format != "json")
    throw Error(ErrorKind::config, "unknown format '" + options.format + "' (expected csv or json)");
}

std::string trajectory_to_json(const Trajectory& traj) {
  ojson j;
  std::vector<double> t(static_cast<std::size_t>(traj.snapshots()));
  for (Eigen::Index k = 0; k < traj.snapshots(); ++k) t[static_cast<std::size_t>(k)] = traj.time(k);
  j["t"] = t;
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < traj.nodes(); ++i) {
    const Eigen::VectorXd row = traj.states.row(i).transpose();
    rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
  }
  j["states"] = rows;
  return j.dump() + "\n";
}

ojson metrics_object(const Metrics& m) { return ojson::parse(metrics_to_json(m)); }

double ratio_or_null(const Metrics& a, const Metrics& b) {
  if (a.relative_undefined || b.relative_undefined || b.relative_l2 == 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return a.relative_l2 / b.relative_l2;
}

}  // namespace

Trajectory simulate(const ExperimentConfig& cfg, const Graph& graph) {
  if (cfg.trajectory_input) return trajectory_from_csv(read_text_file(*cfg.trajectory_input));
  const Eigen::VectorXd x0 = resolved_x0(cfg, graph.n());
  const auto steps = static_cast<std::size_t>(cfg.snapshots - 1);
  const auto substeps = static_cast<std::size_t>(cfg.substeps);
  if (cfg.model == DynamicsModel::consensus) {
    const ConsensusParams params(graph);
    return integrate_rk4([&params](const Eigen::VectorXd& x) { return consensus_rhs(params, x); }, x0, cfg.dt,
                         steps, substeps);
  }
  const SisParams params(graph, resolved_delta(cfg, graph.n()));
  return integrate_rk4([&params](const Eigen::VectorXd& x) { return sis_rhs(params, x); }, x0, cfg.dt, steps,
                       substeps);
}

namespace {

struct Inputs {
  std::optional<Graph> graph;
  Trajectory traj;
};

Inputs load_inputs(const ExperimentConfig& cfg, bool need_graph) {
  Inputs in;
  if (cfg.graph && (need_graph || !cfg.trajectory_input))
    in.graph = stage("graph", [&] { return build_graph(cfg); });
  if (need_graph && !in.graph) throw Error(ErrorKind::config, "this command needs a graph section");
  in.traj = stage("simulate", [&] {
    if (cfg.trajectory_input) return trajectory_from_csv(read_text_file(*cfg.trajectory_input));
    return simulate(cfg, *in.graph);
  });
  if (in.graph && in.traj.nodes() != in.graph->n())
    throw Error(ErrorKind::config, "trajectory has " + std::to_string(in.traj.nodes()) +
                                       " nodes but the graph has " + std::to_string(in.graph->n()));
  return in;
}

}  // namespace

RunOutput cmd_simulate(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& options) {
  check_format(options);
  const Inputs in = load_inputs(cfg, false);
  OutputDir dir(out, "simulate", &cfg, options);
  if (options.format == "json") dir.write("trajectory.json", trajectory_to_json(in.traj));
  else dir.write("trajectory.csv", trajectory_to_csv(in.traj));
  if (in.graph) dir.write("graph.edges", serialize_edge_list(*in.graph));
  if (cfg.model == DynamicsModel::sis && in.graph) {
    const Eigen::VectorXd delta = resolved_delta(cfg, in.graph->n());
    dir.write("delta.json", ojson(std::vector<double>(delta.data(), delta.data() + delta.size())).dump() + "\n");
  }
  return dir.finish();
}

RunOutput cmd_predict(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& options) {
  check_format(options);
  const Inputs in = load_inputs(cfg, false);
  const bool probabilities = cfg.model == DynamicsModel::sis;
  const PipelineResult r = stage("pipeline", [&] { return run_pipeline(in.traj, cfg.pipeline, probabilities); });

  OutputDir dir(out, "predict", &cfg, options);
  dir.write("forecast.csv", forecast_to_csv(r.truth_fit, r.reported_fit, r.truth_pred, r.reported_pred,
                                            in.traj.t0, in.traj.dt));
  dir.write("model.json", model_to_json(r.fit.model));
  dir.write("basis.txt", basis_to_text(r.fit.basis, r.fit.k_obs, r.fit.dt));
  ojson metrics;
  metrics["kind"] = "pod_sindy";
  metrics["k_obs"] = r.fit.k_obs;
  metrics["k_pred"] = r.truth_pred.cols();
  metrics["modes"] = r.fit.basis.m();
  metrics["t_obs"] = in.traj.t0 + r.fit.t_obs;
  metrics["clamped"] = r.clamped;
  metrics["diverged"] = r.forecast.diverged;
  metrics["last_valid_time"] = in.traj.t0 + r.forecast.last_valid_time;
  metrics["fit"] = metrics_object(r.fit_metrics);
  metrics["predict"] = metrics_object(r.predict_metrics);
  metrics["baseline"] = metrics_object(r.baseline_metrics);
  metrics["predict_over_baseline"] = ratio_or_null(r.predict_metrics, r.baseline_metrics);
  dir.write("metrics.json", metrics.dump(2) + "\n");
  RunOutput result = dir.finish();
  if (r.forecast.diverged)
    throw Error(ErrorKind::divergence, "forecast: coefficient integration diverged after t=" +
                                           format_double(in.traj.t0 + r.forecast.last_valid_time) +
                                           " (outputs written with the valid prefix)");
  return result;
}

RunOutput cmd_cluster(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& options) {
  check_format(options);
  bool need_graph = false;
  for (auto s : cfg.cluster_sources) need_graph = need_graph || s == ClusterSource::adjacency;
  bool need_traj = false;
  for (auto s : cfg.cluster_sources) need_traj = need_traj || s == ClusterSource::snapshot;

  std::optional<Graph> graph;
  Trajectory traj;
  if (need_graph) {
    if (!cfg.graph) throw Error(ErrorKind::config, "adjacency clustering needs a graph section");
    graph = stage("graph", [&] { return build_graph(cfg); });
  }
  if (need_traj) {
    const Inputs in = load_inputs(cfg, false);
    traj = in.traj;
    if (!graph && in.graph && need_graph) graph = in.graph;
  }

  std::string csv = "node,label,source\n";
  ojson report = ojson::object();
  for (auto source : cfg.cluster_sources) {
    const ClusterAssignment a = stage("cluster", [&] {
      const Eigen::MatrixXd& features = source == ClusterSource::adjacency ? graph->adjacency() : traj.states;
      return spectral_cluster(features, cfg.cluster_k, cfg.cluster_seed, source, cfg.cluster_laplacian);
    });
    for (std::size_t i = 0; i < a.labels.size(); ++i)
      csv += std::to_string(i) + "," + std::to_string(a.labels[i]) + "," + to_string(source) + "\n";
    ojson entry;
    entry["k"] = a.k;
    entry["inertia"] = a.inertia;
    entry["labels"] = a.labels;
    ojson embedding = ojson::array();
    for (Eigen::Index i = 0; i < a.embedding.rows(); ++i) {
      const Eigen::VectorXd row = a.embedding.row(i).transpose();
      embedding.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    entry["embedding"] = embedding;
    if (graph) entry["clusters_connected"] = clusters_connected(*graph, a.labels);
    if (need_traj && a.k > 1) {
      const DistanceContrast c = trajectory_distance_contrast(traj.states, a.labels);
      entry["trajectory_distance"] = {{"within", c.within}, {"between", c.between}};
    }
    report[to_string(source)] = entry;
  }

  OutputDir dir(out, "cluster", &cfg, options);
  dir.write("clusters.csv", csv);
  dir.write("clusters.json", report.dump(2) + "\n");
  return dir.finish();
}

RunOutput cmd_surrogate(const ExperimentConfig& cfg, const fs::path& out, const RunOptions& options) {
  check_format(options);
  if (cfg.model != DynamicsModel::sis) throw Error(ErrorKind::config, "surrogate prediction needs SIS dynamics");
  const Inputs in = load_inputs(cfg, false);
  const Eigen::Index n = in.traj.nodes();
  const Eigen::Index k = in.traj.snapshots();
  cfg.pipeline.validate();
  const Eigen::Index k_obs = observation_count(k, cfg.pipeline.obs_fraction);
  const Eigen::Index k_pred = k - k_obs;
  if (k_obs < 2 || k_pred < 2)
    throw Error(ErrorKind::insufficient_data, "surrogate: observation window needs at least 2 snapshots and the "
                                              "held-out window at least 2");

  SurrogateParams params;
  params.delta = resolved_delta(cfg, n);
  params.rho = resolved_rho(cfg, n, k_obs);
  params.max_sweeps = cfg.surrogate_max_sweeps;
  params.tol = cfg.surrogate_tol;
  const SnapshotMatrix window{in.traj.states.leftCols(k_obs), in.traj.dt};
  const SurrogateResult fit = stage("surrogate", [&] { return surrogate_fit(window, params); });
  const double t_obs = window.t_obs();
  const Forecast f = stage("forecast", [&] {
    return surrogate_forecast(fit.a_hat, params.delta, window.states.col(k_obs - 1), t_obs,
                              static_cast<double>(k - 1) * in.traj.dt, in.traj.dt, cfg.substeps);
  });

  const Eigen::MatrixXd truth_fit = window.states;
  const Eigen::MatrixXd truth_pred = in.traj.states.rightCols(k_pred);
  Eigen::MatrixXd reported = f.predicted;
  const bool clamped = clamp_unit_interval(reported);
  const Metrics pm = error_metrics(reported, truth_pred.leftCols(reported.cols()));
  const Metrics bm = error_metrics(truth_fit.col(k_obs - 1).replicate(1, k_pred), truth_pred);

  OutputDir dir(out, "surrogate", &cfg, options);
  dir.write("surrogate.edges", serialize_edge_list(fit.a_hat));
  dir.write("forecast.csv", forecast_to_csv(truth_fit, Eigen::MatrixXd(), truth_pred, reported, in.traj.t0,
                                            in.traj.dt));
  ojson metrics;
  metrics["kind"] = "surrogate";
  metrics["k_obs"] = k_obs;
  metrics["k_pred"] = k_pred;
  metrics["sweeps"] = fit.max_sweeps_used;
  metrics["converged"] = fit.converged;
  metrics["clamped"] = clamped;
  metrics["diverged"] = f.diverged;
  metrics["predict"] = metrics_object(pm);
  metrics["baseline"] = metrics_object(bm);
  metrics["predict_over_baseline"] = ratio_or_null(pm, bm);
  dir.write("metrics.json", metrics.dump(2) + "\n");
  RunOutput result = dir.finish();
  if (f.diverged) throw Error(ErrorKind::divergence, "forecast: surrogate integration diverged");
  return result;
}

RunOutput cmd_report(const std::vector<fs::path>& inputs, const fs::path& out, const RunOptions& options) {
  check_format(options);
  if (inputs.empty()) throw Error(ErrorKind::config, "report needs at least one input directory");
  auto field = [](const json& m, const char* section) -> json {
    if (!m.contains(section) || !m[section].is_object()) return nullptr;
    return m[section].value("relative_l2", json(nullptr));
  };
  auto cell = [](const json& v) { return v.is_number() ? format_double(v.get<double>()) : std::string("NA"); };

  std::string csv = "run,kind,fit_relative_l2,predict_relative_l2,baseline_relative_l2,predict_over_baseline\n";
  ojson rows = ojson::array();
  for (const auto& input : inputs) {
    const fs::path file = fs::is_directory(input) ? input / "metrics.json" : input;
    json m;
    try {
      m = json::parse(read_text_file(file));
    } catch (const json::parse_error&) {
      throw Error(ErrorKind::parse, "malformed metrics file " + file.string());
    }
    const std::string run = fs::is_directory(input) ? input.filename().string() : input.parent_path().filename().string();
    const json ratio = m.value("predict_over_baseline", json(nullptr));
    const std::string kind = m.value("kind", std::string("unknown"));
    csv += run + "," + kind + "," + cell(field(m, "fit")) + "," + cell(field(m, "predict")) + "," +
           cell(field(m, "baseline")) + "," + cell(ratio) + "\n";
    rows.push_back({{"run", run},
                    {"kind", kind},
                    {"fit_relative_l2", field(m, "fit")},
                    {"predict_relative_l2", field(m, "predict")},
                    {"baseline_relative_l2", field(m, "baseline")},
                    {"predict_over_baseline", ratio}});
  }
  OutputDir dir(out, "report", nullptr, options);
  if (options.format == "json") dir.write("report.json", rows.dump(2) + "\n");
  else dir.write("report.csv", csv);
  std::vector<std::string> names;
  for (const auto& p : inputs) names.push_back(p.string());
  return dir.finish({{"inputs", names}});
}

int exit_code_for(const Error& error) noexcept {
  switch (error.kind()) {
    case ErrorKind::divergence:
    case ErrorKind::rank_deficient:
    case ErrorKind::non_finite:
      return 3;
    case ErrorKind::io:
      return 4;
    default:
      return 2;
  }
}

int run_cli(const CliArgs& args, std::ostream& err) {
  try {
    check_format(args.options);
    if (args.command == "report") {
      if (!args.out) throw Error(ErrorKind::config, "report needs --out");
      cmd_report(args.inputs, *args.out, args.options);
      return 0;
    }
    if (!args.config) throw Error(ErrorKind::config, "--config is required");
    const std::string text = read_text_file(*args.config);
    ExperimentConfig cfg = parse_config(text, args.config->parent_path().empty() ? fs::path(".")
                                                                                  : args.config->parent_path());
    if (args.seed) override_seed(cfg, *args.seed);
    const fs::path out = args.out ? *args.out : cfg.output_directory;
    if (args.command == "simulate") cmd_simulate(cfg, out, args.options);
    else if (args.command == "predict") cmd_predict(cfg, out, args.options);
    else if (args.command == "cluster") cmd_cluster(cfg, out, args.options);
    else if (args.command == "surrogate") cmd_surrogate(cfg, out, args.options);
    else throw Error(ErrorKind::config, "unknown command '" + args.command + "'");
    return 0;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error (io): " << e.what() << "\n";
    return 4;
  }
}

}  // namespace netpod
