#pragma once

// Candidate communication topologies: random DAG pool generation, structural
// checks, and the analytics used for topology reports (density, Jaccard).

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mastune/error.hpp"
#include "mastune/rng.hpp"

namespace mastune {

using Edge = std::pair<std::size_t, std::size_t>;

class DagTopology {
 public:
  DagTopology() = default;

  // Empty graph on n nodes.
  DagTopology(int graph_id, std::size_t n) : graph_id_(graph_id), n_(n), adj_(n * n, 0) {
    if (n == 0) throw ValidationError("DagTopology: num_nodes must be positive");
  }

  // Throws StructuralError on self-loops, out-of-range endpoints, or cycles.
  static DagTopology from_edges(int graph_id, std::size_t n, const std::vector<Edge>& edges) {
    DagTopology g(graph_id, n);
    for (auto [i, j] : edges) {
      if (i >= n || j >= n) throw StructuralError("edge endpoint out of range");
      if (i == j) throw StructuralError("self-loop at node " + std::to_string(i));
      g.adj_[i * n + j] = 1;
    }
    g.check_acyclic();
    return g;
  }

  int graph_id() const { return graph_id_; }
  void set_graph_id(int id) { graph_id_ = id; }
  std::size_t num_nodes() const { return n_; }

  bool has_edge(std::size_t i, std::size_t j) const { return adj_[i * n_ + j] != 0; }

  std::size_t edge_count() const {
    return static_cast<std::size_t>(std::count(adj_.begin(), adj_.end(), std::uint8_t{1}));
  }

  // Row-major (i, j) order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (has_edge(i, j)) out.emplace_back(i, j);
    return out;
  }

  std::vector<std::size_t> in_neighbors(std::size_t j) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_; ++i)
      if (has_edge(i, j)) out.push_back(i);
    return out;
  }

  std::size_t in_degree(std::size_t j) const {
    std::size_t d = 0;
    for (std::size_t i = 0; i < n_; ++i) d += has_edge(i, j) ? 1 : 0;
    return d;
  }

  std::size_t out_degree(std::size_t i) const {
    std::size_t d = 0;
    for (std::size_t j = 0; j < n_; ++j) d += has_edge(i, j) ? 1 : 0;
    return d;
  }

  const std::vector<std::uint8_t>& adjacency() const { return adj_; }

  void check_acyclic() const;

  friend bool operator==(const DagTopology& a, const DagTopology& b) {
    return a.n_ == b.n_ && a.adj_ == b.adj_;
  }

 private:
  int graph_id_ = 0;
  std::size_t n_ = 0;
  std::vector<std::uint8_t> adj_;
};

// Kahn ordering; among ready nodes the lowest index goes first.
inline std::vector<std::size_t> topo_order(const DagTopology& g) {
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> indeg(n, 0);
  for (std::size_t j = 0; j < n; ++j) indeg[j] = g.in_degree(j);
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t u = ready.top();
    ready.pop();
    order.push_back(u);
    for (std::size_t v = 0; v < n; ++v) {
      if (g.has_edge(u, v) && --indeg[v] == 0) ready.push(v);
    }
  }
  if (order.size() != n)
    throw StructuralError("cycle detected in graph " + std::to_string(g.graph_id()));
  return order;
}

inline void DagTopology::check_acyclic() const { (void)topo_order(*this); }

inline double max_dag_edges(std::size_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

// |E| / (N(N-1)/2); a single node has density 0.
inline double density(const DagTopology& g) {
  if (g.num_nodes() < 2) return 0.0;
  return static_cast<double>(g.edge_count()) / max_dag_edges(g.num_nodes());
}

// Directed-edge Jaccard; two empty graphs are identical (1.0).
inline double jaccard(const DagTopology& a, const DagTopology& b) {
  if (a.num_nodes() != b.num_nodes())
    throw ShapeError("jaccard: node count mismatch (" + std::to_string(a.num_nodes()) + " vs " +
                     std::to_string(b.num_nodes()) + ")");
  std::size_t inter = 0, uni = 0;
  const auto& x = a.adjacency();
  const auto& y = b.adjacency();
  for (std::size_t k = 0; k < x.size(); ++k) {
    inter += (x[k] && y[k]) ? 1 : 0;
    uni += (x[k] || y[k]) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Every forward edge of the identity order: the "full graph" baseline.
inline DagTopology complete_dag(std::size_t n, int graph_id = -1) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return DagTopology::from_edges(graph_id, n, e);
}

// Random DAG: uniform node permutation as topological order, then each
// forward pair included independently with probability `p`.
inline DagTopology random_dag(int graph_id, std::size_t n, double p, Rng& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<Edge> e;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (rng.bernoulli(p)) e.emplace_back(perm[a], perm[b]);
  return DagTopology::from_edges(graph_id, n, e);
}

struct GraphPool {
  std::vector<DagTopology> graphs;
  double density_lo = 0.3;
  double density_hi = 0.75;
  std::uint64_t seed = 0;

  std::size_t size() const { return graphs.size(); }
  std::size_t num_nodes() const { return graphs.empty() ? 0 : graphs.front().num_nodes(); }

  const DagTopology& by_id(int id) const {
    for (const auto& g : graphs)
      if (g.graph_id() == id) return g;
    throw LookupError("graph_id " + std::to_string(id) + " not in pool");
  }

  std::string fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& g : graphs) {
      h = splitmix64(h ^ static_cast<std::uint64_t>(g.graph_id()));
      for (auto b : g.adjacency()) h = splitmix64(h ^ b);
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }
};

// Per-graph density d ~ U[lo, hi]; graph ids are 0..K-1.
inline GraphPool generate_pool(std::size_t n, std::size_t k, double lo, double hi, std::uint64_t seed) {
  if (n < 2) throw ValidationError("generate_pool: need N >= 2");
  if (k < 1) throw ValidationError("generate_pool: need K >= 1");
  if (!(lo >= 0.0 && lo <= hi && hi <= 1.0))
    throw ValidationError("generate_pool: density range must satisfy 0 <= lo <= hi <= 1");
  GraphPool pool;
  pool.density_lo = lo;
  pool.density_hi = hi;
  pool.seed = seed;
  pool.graphs.reserve(k);
  Rng rng(mix_seed(seed, 0xDA6));
  for (std::size_t i = 0; i < k; ++i) {
    const double d = rng.uniform(lo, hi);
    pool.graphs.push_back(random_dag(static_cast<int>(i), n, d, rng));
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Import / export

inline nlohmann::json graph_to_json(const DagTopology& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (auto [i, j] : g.edges()) edges.push_back({i, j});
  return {{"graph_id", g.graph_id()}, {"num_nodes", g.num_nodes()}, {"edges", edges}};
}

inline DagTopology graph_from_json(const nlohmann::json& j) {
  try {
    std::vector<Edge> e;
    for (const auto& pr : j.at("edges")) e.emplace_back(pr.at(0).get<std::size_t>(), pr.at(1).get<std::size_t>());
    return DagTopology::from_edges(j.at("graph_id").get<int>(), j.at("num_nodes").get<std::size_t>(), e);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("graph: ") + ex.what());
  }
}

inline nlohmann::json pool_to_json(const GraphPool& pool) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["density_lo"] = pool.density_lo;
  j["density_hi"] = pool.density_hi;
  j["seed"] = pool.seed;
  j["graphs"] = nlohmann::json::array();
  for (const auto& g : pool.graphs) j["graphs"].push_back(graph_to_json(g));
  return j;
}

inline GraphPool pool_from_json(const nlohmann::json& j) {
  GraphPool pool;
  try {
    pool.density_lo = j.value("density_lo", 0.0);
    pool.density_hi = j.value("density_hi", 1.0);
    pool.seed = j.value("seed", std::uint64_t{0});
    for (const auto& g : j.at("graphs")) pool.graphs.push_back(graph_from_json(g));
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("pool: ") + ex.what());
  }
  if (pool.graphs.empty()) throw ValidationError("pool: K must be >= 1");
  for (const auto& g : pool.graphs)
    if (g.num_nodes() != pool.graphs.front().num_nodes())
      throw ValidationError("pool: all graphs must share num_nodes");
  return pool;
}

inline void write_pool_csv(std::ostream& os, const GraphPool& pool) {
  os << "graph_id,num_nodes,edge_count,density\r\n";
  for (const auto& g : pool.graphs)
    os << g.graph_id() << ',' << g.num_nodes() << ',' << g.edge_count() << ',' << density(g) << "\r\n";
}

// Square matrix of pairwise Jaccard similarities; header row lists graph ids.
inline void write_jaccard_csv(std::ostream& os, const std::vector<DagTopology>& graphs) {
  os << "graph_id";
  for (const auto& g : graphs) os << ',' << g.graph_id();
  os << "\r\n";
  for (const auto& a : graphs) {
    os << a.graph_id();
    for (const auto& b : graphs) os << ',' << jaccard(a, b);
    os << "\r\n";
  }
}

inline void write_dot(std::ostream& os, const DagTopology& g, const std::vector<std::string>& labels = {}) {
  os << "digraph \"g" << g.graph_id() << "\" {\n";
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    os << "  n" << i << " [label=\"" << (i < labels.size() ? labels[i] : std::to_string(i)) << "\"];\n";
  }
  for (auto [i, j] : g.edges()) os << "  n" << i << " -> n" << j << ";\n";
  os << "}\n";
}

}  // namespace mastune
