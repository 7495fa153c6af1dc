#include "netpod/graph.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "netpod/error.hpp"
#include "netpod/io.hpp"
#include "netpod/rng.hpp"

namespace netpod {

// Defined in the generated datasets.cpp.
std::string_view dataset_labels_text(std::string_view name);

Graph Graph::from_adjacency(Eigen::MatrixXd adjacency, bool directed,
                            std::vector<std::string> labels) {
  if (adjacency.rows() != adjacency.cols())
    throw Error(ErrorKind::dimension_mismatch, "adjacency must be square");
  if (adjacency.rows() < 1) throw Error(ErrorKind::invalid_argument, "graph needs at least one node");
  if (!adjacency.allFinite()) throw Error(ErrorKind::non_finite, "adjacency has non-finite entries");
  if ((adjacency.array() < 0.0).any())
    throw Error(ErrorKind::domain, "adjacency weights must be nonnegative");
  if ((adjacency.diagonal().array() != 0.0).any())
    throw Error(ErrorKind::invalid_argument, "self-loops are not allowed");
  if (!directed && adjacency != adjacency.transpose())
    throw Error(ErrorKind::invalid_argument, "undirected adjacency must be symmetric");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != adjacency.rows())
    throw Error(ErrorKind::dimension_mismatch, "label count does not match node count");
  return Graph(std::move(adjacency), directed, std::move(labels));
}

std::size_t Graph::edge_count() const {
  std::size_t count = 0;
  for (Eigen::Index j = 0; j < n(); ++j)
    for (Eigen::Index i = 0; i < n(); ++i)
      if (adjacency_(i, j) != 0.0 && (directed_ || i < j)) ++count;
  return count;
}

Graph Graph::scaled(double factor) const {
  if (!(factor > 0.0) || !std::isfinite(factor))
    throw Error(ErrorKind::domain, "weight scale must be positive");
  return Graph(adjacency_ * factor, directed_, labels_);
}

std::vector<int> sbm_block_of(const SbmSpec& spec) {
  std::vector<int> block;
  for (std::size_t b = 0; b < spec.block_sizes.size(); ++b)
    block.insert(block.end(), static_cast<std::size_t>(spec.block_sizes[b]), static_cast<int>(b));
  return block;
}

Graph generate_sbm(const SbmSpec& spec) {
  if (spec.block_sizes.empty()) throw Error(ErrorKind::invalid_argument, "SBM needs at least one block");
  for (int size : spec.block_sizes)
    if (size < 1) throw Error(ErrorKind::invalid_argument, "SBM block sizes must be positive");
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(spec.p_intra) || !in_unit(spec.p_inter))
    throw Error(ErrorKind::invalid_argument, "SBM probabilities must lie in [0, 1]");
  if (!(spec.edge_weight > 0.0) || !std::isfinite(spec.edge_weight))
    throw Error(ErrorKind::invalid_argument, "SBM edge weight must be positive");

  const auto block = sbm_block_of(spec);
  const auto n = static_cast<Eigen::Index>(block.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  const auto stream = static_cast<std::uint32_t>(RngStream::sbm_edges);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || (!spec.directed && j < i)) continue;
      const double p = block[i] == block[j] ? spec.p_intra : spec.p_inter;
      const double u = to_unit_double(counter_bits(spec.seed, stream, static_cast<std::uint32_t>(i),
                                                   static_cast<std::uint32_t>(j)));
      if (u < p) {
        a(i, j) = spec.edge_weight;
        if (!spec.directed) a(j, i) = spec.edge_weight;
      }
    }
  }
  return Graph::from_adjacency(std::move(a), spec.directed);
}

Graph generate_balanced_tree(int branching, int height) {
  if (branching < 1) throw Error(ErrorKind::invalid_argument, "branching must be at least 1");
  if (height < 0) throw Error(ErrorKind::invalid_argument, "height must be nonnegative");
  // Breadth-first numbering: the children of node v are b*v + 1 .. b*v + b.
  long long n = 1, level = 1;
  for (int h = 0; h < height; ++h) {
    level *= branching;
    n += level;
    if (n > 1'000'000) throw Error(ErrorKind::invalid_argument, "tree too large");
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (long long child = 1; child < n; ++child) {
    const long long parent = (child - 1) / branching;
    a(child, parent) = a(parent, child) = 1.0;
  }
  return Graph::from_adjacency(std::move(a), false);
}

Graph generate_path(int n) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "path needs at least one node");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) a(i, i + 1) = a(i + 1, i) = 1.0;
  return Graph::from_adjacency(std::move(a), false);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view s) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto start = s.find_first_not_of(" \t\r", pos);
    if (start == std::string_view::npos) break;
    auto end = s.find_first_of(" \t\r", start);
    if (end == std::string_view::npos) end = s.size();
    fields.push_back(s.substr(start, end - start));
    pos = end;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, out);
  return ec == std::errc() && ptr == end;
}

struct RawEdge {
  long long src, dst;
  double weight;
  std::size_t line;
};

}  // namespace

Graph load_edge_list(std::string_view text, bool directed) {
  std::vector<RawEdge> edges;
  long long declared_nodes = -1;
  long long max_id = -1;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto body = trim(line.substr(1));
      if (body.starts_with("nodes:")) {
        if (!parse_number(trim(body.substr(6)), declared_nodes) || declared_nodes < 1)
          throw ParseError(line_no, "bad node count directive");
      } else if (body.starts_with("directed:")) {
        const auto value = trim(body.substr(9));
        if (value == "true") directed = true;
        else if (value == "false") directed = false;
        else throw ParseError(line_no, "directed must be true or false");
      }
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() < 2 || fields.size() > 3)
      throw ParseError(line_no, "expected 'src dst [weight]'");
    RawEdge e{0, 0, 1.0, line_no};
    if (!parse_number(fields[0], e.src) || !parse_number(fields[1], e.dst) || e.src < 0 || e.dst < 0)
      throw ParseError(line_no, "node ids must be nonnegative integers");
    if (fields.size() == 3 && !parse_number(fields[2], e.weight))
      throw ParseError(line_no, "weight is not a number");
    if (!std::isfinite(e.weight)) throw ParseError(line_no, "weight is not finite");
    if (e.weight < 0.0)
      throw Error(ErrorKind::domain, "line " + std::to_string(line_no) + ": negative weight");
    if (e.src == e.dst) throw ParseError(line_no, "self-loop " + std::to_string(e.src));
    max_id = std::max({max_id, e.src, e.dst});
    edges.push_back(e);
  }
  long long n = max_id + 1;
  if (declared_nodes >= 0) {
    if (declared_nodes < n)
      throw ParseError(line_no, "node id exceeds declared node count");
    n = declared_nodes;
  }
  if (n < 1) throw ParseError(line_no, "edge list has no nodes");
  if (n > 100'000) throw ParseError(line_no, "graph too large for dense storage");

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> seen =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
  for (const auto& e : edges) {
    // A line "src dst" is a link from src to dst, stored at (dst, src).
    if (seen(e.dst, e.src)) throw ParseError(e.line, "duplicate edge");
    seen(e.dst, e.src) = true;
    a(e.dst, e.src) = e.weight;
    if (!directed) {
      seen(e.src, e.dst) = true;
      a(e.src, e.dst) = e.weight;
    }
  }
  return Graph::from_adjacency(std::move(a), directed);
}

std::string serialize_edge_list(const Graph& g) {
  std::string out = "# nodes: " + std::to_string(g.n()) + "\n# directed: " +
                    (g.directed() ? "true" : "false") + "\n";
  const auto& a = g.adjacency();
  for (Eigen::Index src = 0; src < g.n(); ++src) {
    for (Eigen::Index dst = 0; dst < g.n(); ++dst) {
      if (!g.directed() && dst < src) continue;
      const double w = a(dst, src);
      if (w == 0.0) continue;
      out += std::to_string(src) + ' ' + std::to_string(dst) + ' ' + format_double(w) + '\n';
    }
  }
  return out;
}

Graph load_dataset(std::string_view name) {
  const auto text = dataset_edge_text(name);
  if (!text) throw Error(ErrorKind::invalid_argument, "unknown dataset '" + std::string(name) + "'");
  Graph g = load_edge_list(*text, false);
  std::vector<std::string> labels;
  const auto label_text = dataset_labels_text(name);
  std::size_t pos = 0;
  while (pos < label_text.size()) {
    auto nl = label_text.find('\n', pos);
    if (nl == std::string_view::npos) nl = label_text.size();
    const auto label = trim(label_text.substr(pos, nl - pos));
    if (!label.empty()) labels.emplace_back(label);
    pos = nl + 1;
  }
  return Graph::from_adjacency(g.adjacency(), g.directed(), std::move(labels));
}

Eigen::MatrixXd laplacian(const Graph& g) {
  if (g.directed()) throw Error(ErrorKind::unsupported, "Laplacian requires an undirected graph");
  Eigen::MatrixXd l = -g.adjacency();
  l.diagonal() = g.adjacency().rowwise().sum();
  return l;
}

}  // namespace netpod
