#pragma once

// Graph scorer: GCN over role/query node features, mean pooling, and a head
// conditioned on the query embedding. Picks the best-scoring pool topology.

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mastune/error.hpp"
#include "mastune/graphs.hpp"
#include "mastune/nn.hpp"
#include "mastune/rng.hpp"
#include "mastune/searchspace.hpp"

namespace mastune {

struct GraphScorer {
  GcnParams gcn;
  Mlp head;  // [z_G, h_Q] -> 128 -> 1
  int embed_dim = kDefaultEmbedDim;
};

inline GraphScorer make_scorer(int embed_dim, Rng& rng, double dropout = 0.1, Eigen::Index hidden = kGcnHidden) {
  GraphScorer s;
  s.embed_dim = embed_dim;
  s.gcn = make_gcn(2 * embed_dim, rng, hidden, dropout);
  s.head = make_mlp({static_cast<int>(hidden) + embed_dim, 128, 1}, rng);
  return s;
}

inline std::vector<ParamView> views_of(GraphScorer& s) {
  std::vector<ParamView> v;
  append_views(s.gcn.conv1, "gcn.conv1", v);
  append_views(s.gcn.conv2, "gcn.conv2", v);
  append_views(s.head, "head", v);
  return v;
}

inline std::string role_text(const RoleProfile& r) {
  std::string s = r.name;
  s += kSeparator;
  s += r.description;
  return s;
}

// Row i = embed(role_i) followed by embed(query).
inline Mat node_features(const Task& task, const std::vector<std::size_t>& roles, const SearchSpace& space,
                         std::size_t expected_nodes = 0) {
  if (expected_nodes != 0 && roles.size() != expected_nodes)
    throw ShapeError("node_features: " + std::to_string(roles.size()) + " roles for " +
                     std::to_string(expected_nodes) + " nodes");
  const int d = space.embed_dim();
  const Vec q = embed_text(task.query_text, d);
  Mat x(static_cast<Eigen::Index>(roles.size()), 2 * d);
  for (std::size_t i = 0; i < roles.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    x.row(row).head(d) = embed_text(role_text(space.roles().at(roles[i])), d).transpose();
    x.row(row).tail(d) = q.transpose();
  }
  return x;
}

// Precomputed per-task inputs, so scoring many graphs does not re-embed.
struct ScoringInput {
  Mat features;
  Vec query;
};

inline ScoringInput scoring_input(const Task& task, const std::vector<std::size_t>& roles, const SearchSpace& space) {
  return {node_features(task, roles, space), embed_text(task.query_text, space.embed_dim())};
}

struct ScorerCache {
  GcnCache gcn;
  MlpCache head;
};

inline double score_graph(const GraphScorer& s, const ScoringInput& in, const Mat& a_hat, bool train_mode, Rng* rng,
                          ScorerCache* cache = nullptr) {
  if (in.query.size() != s.embed_dim) throw ShapeError("score_graph: query embedding width mismatch");
  const Vec z = gcn_encode(s.gcn, in.features, a_hat, train_mode, rng, cache ? &cache->gcn : nullptr);
  Vec h(z.size() + in.query.size());
  h << z, in.query;
  return mlp_forward(s.head, h, cache ? &cache->head : nullptr)[0];
}

inline double score_graph(const GraphScorer& s, const ScoringInput& in, const DagTopology& g, bool train_mode,
                          Rng* rng, ScorerCache* cache = nullptr) {
  if (static_cast<Eigen::Index>(g.num_nodes()) != in.features.rows())
    throw ShapeError("score_graph: graph has " + std::to_string(g.num_nodes()) + " nodes, features have " +
                     std::to_string(in.features.rows()) + " rows");
  return score_graph(s, in, normalized_adjacency(g), train_mode, rng, cache);
}

inline double score_graph(const GraphScorer& s, const Task& task, const std::vector<std::size_t>& roles,
                          const SearchSpace& space, const DagTopology& g) {
  return score_graph(s, scoring_input(task, roles, space), g, false, nullptr);
}

inline GraphScorer zeros_like(const GraphScorer& s) {
  GraphScorer z;
  z.embed_dim = s.embed_dim;
  z.gcn.dropout_rate = s.gcn.dropout_rate;
  z.gcn.conv1 = zeros_like(s.gcn.conv1);
  z.gcn.conv2 = zeros_like(s.gcn.conv2);
  z.head = zeros_like(s.head);
  return z;
}

// Adds k * d_score * (gradient of s) into `acc`.
inline void score_backward_add(const GraphScorer& s, const ScorerCache& cache, double d_score, double k,
                               GraphScorer& acc) {
  Mat d_out(1, 1);
  d_out(0, 0) = d_score;
  const Mat d_h = mlp_backward_add(s.head, cache.head, d_out, k, acc.head, true);
  const Vec dz = d_h.col(0).head(s.gcn.conv2.out());
  gcn_backward_add(s.gcn, cache.gcn, dz, k, acc.gcn);
}

// Gradient of d_score * s with respect to every scorer parameter.
inline GraphScorer score_backward(const GraphScorer& s, const ScorerCache& cache, double d_score) {
  GraphScorer g = zeros_like(s);
  score_backward_add(s, cache, d_score, 1.0, g);
  return g;
}

inline void add_scaled(GraphScorer& acc, const GraphScorer& g, double k) {
  add_scaled(acc.gcn.conv1, g.gcn.conv1, k);
  add_scaled(acc.gcn.conv2, g.gcn.conv2, k);
  add_scaled(acc.head, g.head, k);
}

struct Selection {
  int graph_id = 0;
  double score = 0.0;
};

// Eval-mode argmax; equal scores go to the lowest graph_id whatever the pool order.
inline Selection select_topology(const GraphScorer& s, const ScoringInput& in, const std::vector<DagTopology>& pool) {
  if (pool.empty()) throw ValidationError("select_topology: empty pool");
  Selection best{std::numeric_limits<int>::max(), -std::numeric_limits<double>::infinity()};
  for (const auto& g : pool) {
    const double v = score_graph(s, in, g, false, nullptr);
    if (v > best.score || (v == best.score && g.graph_id() < best.graph_id)) best = {g.graph_id(), v};
  }
  return best;
}

inline Selection select_topology(const GraphScorer& s, const Task& task, const std::vector<std::size_t>& roles,
                                 const SearchSpace& space, const GraphPool& pool) {
  return select_topology(s, scoring_input(task, roles, space), pool.graphs);
}

// ---------------------------------------------------------------------------
// Checkpoint

inline nlohmann::json scorer_to_json(GraphScorer& s, const SearchSpace& space, const GraphPool& pool,
                                     const AdamState* adam = nullptr) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "graph_scorer";
  j["embed_dim"] = s.embed_dim;
  j["hidden"] = s.gcn.conv1.out();
  j["dropout"] = s.gcn.dropout_rate;
  j["pool_fingerprint"] = space.fingerprint();
  j["graph_pool_fingerprint"] = pool.fingerprint();
  j["tensors"] = tensors_to_json(views_of(s));
  if (adam) j["adam"] = adam_to_json(*adam);
  return j;
}

inline GraphScorer scorer_from_json(const nlohmann::json& j, const SearchSpace& space, const GraphPool& pool) {
  if (j.value("kind", std::string{}) != "graph_scorer") throw ParseError("checkpoint is not a graph scorer");
  if (j.at("pool_fingerprint").get<std::string>() != space.fingerprint())
    throw ValidationError("scorer checkpoint was trained on a different model pool (fingerprint mismatch)");
  if (j.at("graph_pool_fingerprint").get<std::string>() != pool.fingerprint())
    throw ValidationError("scorer checkpoint was trained on a different graph pool (fingerprint mismatch)");
  Rng rng(0);
  GraphScorer s = make_scorer(j.at("embed_dim").get<int>(), rng, j.at("dropout").get<double>(),
                              j.at("hidden").get<Eigen::Index>());
  tensors_from_json(j.at("tensors"), views_of(s));
  return s;
}

inline void write_selection_csv(std::ostream& os, const std::vector<std::string>& task_ids,
                                const std::vector<Selection>& picks, const GraphPool& pool) {
  os << "task_id,graph_id,score,density\r\n";
  for (std::size_t i = 0; i < picks.size(); ++i)
    os << task_ids.at(i) << ',' << picks[i].graph_id << ',' << picks[i].score << ','
       << density(pool.by_id(picks[i].graph_id)) << "\r\n";
}

}  // namespace mastune
