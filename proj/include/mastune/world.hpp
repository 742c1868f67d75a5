#pragma once

// Executes a system configuration over its topology through an agent backend.
// The simulated backend turns latent capabilities into call qualities; the
// world then composes node qualities, draws correctness, and bills tokens.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mastune/error.hpp"
#include "mastune/graphs.hpp"
#include "mastune/policy.hpp"
#include "mastune/rewards.hpp"
#include "mastune/rng.hpp"
#include "mastune/searchspace.hpp"
#include "mastune/trace.hpp"

namespace mastune {

enum class ProposerAggregation { max, mean };

struct WorldParams {
  double synth_weight = 0.5;     // w0
  double proposer_weight = 0.3;  // w1
  double neighbor_weight = 0.2;  // w2
  double dilution_penalty = 0.0;  // zeta, per input beyond capacity
  int synth_capacity = 8;         // kappa_cap
  double planted_edge_bonus = 0.0;
  double offplant_penalty = 0.0;
  long base_tokens_in = 400;
  long base_tokens_out = 200;
  long per_message_tokens = 150;
  double cost_budget = 0.01;
  ProposerAggregation proposer_aggregation = ProposerAggregation::max;
  std::optional<DagTopology> planted;

  void validate() const {
    for (double w : {synth_weight, proposer_weight, neighbor_weight, dilution_penalty, planted_edge_bonus,
                     offplant_penalty, cost_budget})
      if (!std::isfinite(w)) throw ValidationError("world: parameters must be finite");
    if (synth_weight < 0 || proposer_weight < 0 || neighbor_weight < 0)
      throw ValidationError("world: quality weights must be >= 0");
    if (std::abs(synth_weight + proposer_weight + neighbor_weight - 1.0) > 1e-9)
      throw ValidationError("world: synth_weight + proposer_weight + neighbor_weight must equal 1");
    if (dilution_penalty < 0) throw ValidationError("world: dilution_penalty must be >= 0");
    if (synth_capacity < 1) throw ValidationError("world: synth_capacity must be >= 1");
    if (planted_edge_bonus < 0 || offplant_penalty < 0)
      throw ValidationError("world: planted_edge_bonus and offplant_penalty must be >= 0");
    if (base_tokens_in < 0 || base_tokens_out < 0 || per_message_tokens < 0)
      throw ValidationError("world: token counts must be >= 0");
    if (!(cost_budget > 0)) throw ValidationError("world: cost_budget must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Backends

struct AgentRequest {
  const Task* task = nullptr;
  const RoleProfile* role = nullptr;
  const ModelProfile* model = nullptr;
  PositionType position = PositionType::proposer;
  std::vector<double> inbound_quality;
  std::vector<std::string> inbound_text;
};

struct AgentOutput {
  double quality = 0.0;
  std::string text;
  long tokens_in = 0;
  long tokens_out = 0;
};

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual AgentOutput invoke(const AgentRequest& req, Rng& rng) const = 0;
  // False when call quality cannot be measured, so node-level rewards are unavailable.
  virtual bool quality_observable() const { return true; }
  virtual bool concurrent_safe() const { return true; }
};

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

inline double dot(const std::vector<double>& a, const std::vector<double>& b, const char* what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline AgentOutput invoke_simulated(const WorldParams& world, const RoleProfile& role, const ModelProfile& model,
                                    std::size_t inbound, const Task& task, Rng& rng) {
  if (model.is_skip) throw ValidationError("invoke_simulated: the skip token cannot be invoked");
  double raw = 0.6 * dot(model.capability, task.domain, "capability/domain") +
               0.2 * dot(model.capability, role.domain_affinity, "capability/affinity") - 0.4 * task.difficulty;
  if (model.noise_scale > 0.0) raw += rng.gaussian(0.0, model.noise_scale);
  AgentOutput out;
  out.quality = clamp01(raw + 0.5);
  out.tokens_in = world.base_tokens_in + world.per_message_tokens * static_cast<long>(inbound);
  out.tokens_out = world.base_tokens_out;
  out.text = "[" + model.model_id + "/" + role.role_id + "]";
  return out;
}

class SimulatedBackend final : public AgentBackend {
 public:
  explicit SimulatedBackend(WorldParams world) : world_(std::move(world)) {}
  AgentOutput invoke(const AgentRequest& req, Rng& rng) const override {
    return invoke_simulated(world_, *req.role, *req.model, req.inbound_quality.size(), *req.task, rng);
  }

 private:
  WorldParams world_;
};

// ---------------------------------------------------------------------------
// Execution

// Topology term shared by every active node, measured on the subgraph induced
// by active nodes: zero for the planted graph, negative for missing planted
// edges and for edges outside it.
inline double planted_adjustment(const WorldParams& world, const DagTopology& g, const std::vector<bool>& active) {
  if (!world.planted) return 0.0;
  const DagTopology& star = *world.planted;
  if (star.num_nodes() != g.num_nodes()) throw ShapeError("planted graph and topology differ in node count");
  std::size_t star_edges = 0, hit = 0, used = 0, off = 0;
  const std::size_t n = g.num_nodes();
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (!active[j]) continue;
      const bool s = star.has_edge(i, j), e = g.has_edge(i, j);
      star_edges += s;
      used += e;
      hit += s && e;
      off += e && !s;
    }
  }
  const double match = star_edges == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(star_edges);
  const double offf = used == 0 ? 0.0 : static_cast<double>(off) / static_cast<double>(used);
  return world.planted_edge_bonus * (match - 1.0) - world.offplant_penalty * offf;
}

inline double call_cost(const ModelProfile& m, long tokens_in, long tokens_out) {
  return (static_cast<double>(tokens_in) * m.price_in + static_cast<double>(tokens_out) * m.price_out) / 1000.0;
}

// Visits active supernodes in topological order. Each node draws from its
// own stream mix(seed, node), so unrelated nodes never shift each other's draws.
inline ExecutionTrace execute_system(const SystemConfiguration& cfg, const SearchSpace& space,
                                     const AgentBackend& backend, const WorldParams& world, std::uint64_t seed) {
  const std::size_t n = cfg.assignments.size();
  if (cfg.topology.num_nodes() != n)
    throw ShapeError("execute_system: topology has " + std::to_string(cfg.topology.num_nodes()) + " nodes for " +
                     std::to_string(n) + " supernodes");
  const std::vector<std::size_t> order = topo_order(cfg.topology);
  ExecutionTrace trace;
  trace.nodes.resize(n);
  trace.node_rewards_observable = backend.quality_observable();
  std::vector<bool> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = cfg.assignments[i].active;
  const double topo_term = planted_adjustment(world, cfg.topology, active);
  std::vector<std::string> node_text(n);

  for (std::size_t i : order) {
    const SupernodeAssignment& a = cfg.assignments[i];
    if (!a.active) continue;
    NodeTrace& node = trace.nodes[i];
    node.active = true;
    Rng rng(mix_seed(seed, i));
    const RoleProfile& role = space.roles().at(a.role_index);
    AgentRequest base;
    base.task = &cfg.task;
    base.role = &role;
    for (std::size_t j : cfg.topology.in_neighbors(i)) {
      if (!active[j]) continue;
      base.inbound_quality.push_back(trace.nodes[j].quality);
      base.inbound_text.push_back(node_text[j]);
    }
    const std::vector<double> neighbor_q = base.inbound_quality;

    auto call = [&](std::size_t model, const AgentRequest& req, bool synth) {
      AgentRequest r = req;
      r.model = &space.models().at(model);
      r.position = synth ? PositionType::synthesizer : PositionType::proposer;
      AgentOutput out;
      try {
        out = backend.invoke(r, rng);
      } catch (const std::exception& ex) {
        throw Error("supernode " + std::to_string(i) + ": " + ex.what());
      }
      CallRecord rec;
      rec.supernode = i;
      rec.model = model;
      rec.synthesizer = synth;
      rec.tokens_in = out.tokens_in;
      rec.tokens_out = out.tokens_out;
      rec.quality = out.quality;
      rec.cost = call_cost(*r.model, out.tokens_in, out.tokens_out);
      node.cost += rec.cost;
      trace.calls.push_back(rec);
      return out;
    };

    std::vector<double> proposer_q;
    AgentRequest synth_req = base;
    for (std::size_t m : a.proposer_models) {
      if (m == space.skip_index()) continue;
      const AgentOutput out = call(m, base, false);
      proposer_q.push_back(out.quality);
      synth_req.inbound_quality.push_back(out.quality);
      synth_req.inbound_text.push_back(out.text);
    }
    const AgentOutput syn = call(a.synthesizer_model, synth_req, true);
    node_text[i] = syn.text;

    double agg = 0.0;
    if (!proposer_q.empty()) {
      if (world.proposer_aggregation == ProposerAggregation::max) {
        agg = *std::max_element(proposer_q.begin(), proposer_q.end());
      } else {
        for (double q : proposer_q) agg += q;
        agg /= static_cast<double>(proposer_q.size());
      }
    }
    double nb = 0.0;
    for (double q : neighbor_q) nb += q;
    if (!neighbor_q.empty()) nb /= static_cast<double>(neighbor_q.size());
    node.inputs = proposer_q.size() + neighbor_q.size();
    const double overflow = std::max(0.0, static_cast<double>(node.inputs) - world.synth_capacity);
    node.raw_quality = world.synth_weight * syn.quality + world.proposer_weight * agg + world.neighbor_weight * nb +
                       topo_term - world.dilution_penalty * overflow;
    node.quality = clamp01(node.raw_quality);
    node.correct = rng.bernoulli(node.quality) ? 1 : -1;
    node.normalized_cost = normalize_cost(node.cost, world.cost_budget);
    trace.decision_node = static_cast<int>(i);
  }

  for (const auto& nd : trace.nodes) trace.total_cost += nd.cost;
  trace.normalized_cost = normalize_cost(trace.total_cost, world.cost_budget);
  trace.final_correct = trace.decision_node >= 0 ? trace.nodes[static_cast<std::size_t>(trace.decision_node)].correct : -1;
  return trace;
}

inline std::vector<const RoleProfile*> roles_of(const SystemConfiguration& cfg, const SearchSpace& space) {
  std::vector<const RoleProfile*> out;
  for (const auto& a : cfg.assignments) out.push_back(&space.roles().at(a.role_index));
  return out;
}

// ---------------------------------------------------------------------------
// Planted worlds

struct PlantedWorldOptions {
  std::size_t pool_size = 20;
  double density_lo = 0.3;
  double density_hi = 0.75;
  double gamma = 0.2;
  std::size_t samples = 10000;
  double initial_bonus = 0.1;
  double penalty_ratio = 1.0;  // offplant_penalty / planted_edge_bonus
  double growth = 1.25;
  int max_retries = 30;
  double z = 1.96;
  std::size_t proposers = 2;
  std::optional<std::size_t> reference_model;  // default: strongest model
};

struct PlantedWorld {
  WorldParams params;
  GraphPool pool;
  int star_id = 0;
  double margin_lower = 0.0;  // min over rivals of the 95% lower bound of the reward gap
  double margin_mean = 0.0;   // min over rivals of the mean reward gap
  std::vector<double> mean_rewards;  // indexed by graph_id
  int rounds = 0;
};

namespace detail {

struct MarginEstimate {
  double lower = 0.0;
  double mean = 0.0;
  std::vector<double> means;
};

// Common random numbers: every graph sees the same (task, seed) sequence, and
// the gap to the planted graph is estimated from paired differences.
inline MarginEstimate estimate_margin(const GraphPool& pool, int star_id, const SearchSpace& space,
                                      const std::vector<std::size_t>& roles, const std::vector<Task>& tasks,
                                      const WorldParams& world, const RewardParams& rewards,
                                      const PlantedWorldOptions& opt, std::size_t model, std::uint64_t seed) {
  const SimulatedBackend backend(world);
  const std::size_t k = pool.size();
  std::vector<std::vector<double>> r(k, std::vector<double>(opt.samples));
  for (std::size_t s = 0; s < opt.samples; ++s) {
    const Task& task = tasks[s % tasks.size()];
    const std::uint64_t run_seed = mix_seed(seed, 0x5A, s);
    for (std::size_t g = 0; g < k; ++g) {
      const SystemConfiguration cfg =
          fixed_configuration(model, space, task, roles, opt.proposers, pool.graphs[g]);
      const ExecutionTrace t = execute_system(cfg, space, backend, world, run_seed);
      r[g][s] = cost_reward(t.final_correct, t.normalized_cost, rewards.lambda_cost);
    }
  }
  MarginEstimate est;
  est.means.assign(k, 0.0);
  std::size_t star = 0;
  for (std::size_t g = 0; g < k; ++g) {
    for (double x : r[g]) est.means[g] += x;
    est.means[g] /= static_cast<double>(opt.samples);
    if (pool.graphs[g].graph_id() == star_id) star = g;
  }
  est.lower = est.mean = std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(opt.samples);
  for (std::size_t g = 0; g < k; ++g) {
    if (g == star) continue;
    double mean = 0.0, sq = 0.0;
    for (std::size_t s = 0; s < opt.samples; ++s) mean += r[star][s] - r[g][s];
    mean /= n;
    for (std::size_t s = 0; s < opt.samples; ++s) sq += std::pow(r[star][s] - r[g][s] - mean, 2);
    const double sd = opt.samples > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    est.mean = std::min(est.mean, mean);
    est.lower = std::min(est.lower, mean - opt.z * sd / std::sqrt(n));
  }
  return est;
}

}  // namespace detail

// Pool = G* at a seeded random slot plus K-1 random graphs distinct from it.
// The planted weights start at `initial_bonus` and grow geometrically until
// the planted graph beats every rival by gamma at 95% confidence under the
// reference configuration.
inline PlantedWorld build_planted_world(const SearchSpace& space, const std::vector<std::size_t>& roles,
                                        const std::vector<Task>& tasks, const DagTopology& star,
                                        WorldParams base, const RewardParams& rewards,
                                        const PlantedWorldOptions& opt, std::uint64_t seed) {
  star.check_acyclic();
  if (roles.size() != star.num_nodes()) throw ShapeError("build_planted_world: one role per node required");
  if (tasks.empty()) throw ValidationError("build_planted_world: need at least one task");
  if (opt.pool_size < 1) throw ValidationError("build_planted_world: pool_size must be >= 1");
  if (opt.samples < 2) throw ValidationError("build_planted_world: need at least 2 samples");
  if (!(opt.growth > 1.0)) throw ValidationError("build_planted_world: growth must exceed 1");
  if (!(opt.initial_bonus >= 0.0)) throw ValidationError("build_planted_world: initial_bonus must be >= 0");

  PlantedWorld out;
  Rng rng(mix_seed(seed, 0x71A));
  const std::size_t n = star.num_nodes();
  const std::size_t slot = static_cast<std::size_t>(rng.below(opt.pool_size));
  out.pool.density_lo = opt.density_lo;
  out.pool.density_hi = opt.density_hi;
  out.pool.seed = seed;
  for (std::size_t i = 0; i < opt.pool_size; ++i) {
    if (i == slot) {
      DagTopology g = star;
      g.set_graph_id(static_cast<int>(i));
      out.pool.graphs.push_back(std::move(g));
      continue;
    }
    for (;;) {
      const double d = rng.uniform(opt.density_lo, opt.density_hi);
      DagTopology g = random_dag(static_cast<int>(i), n, d, rng);
      if (!(g == star)) {
        out.pool.graphs.push_back(std::move(g));
        break;
      }
    }
  }
  out.star_id = static_cast<int>(slot);

  base.planted = star;
  base.planted_edge_bonus = opt.initial_bonus;
  base.offplant_penalty = opt.initial_bonus * opt.penalty_ratio;
  base.validate();
  const std::size_t model = opt.reference_model.value_or(space.strongest_model());
  const std::uint64_t mc_seed = mix_seed(seed, 0xCA1);

  for (int round = 0;; ++round) {
    const detail::MarginEstimate est =
        detail::estimate_margin(out.pool, out.star_id, space, roles, tasks, base, rewards, opt, model, mc_seed);
    out.params = base;
    out.margin_lower = opt.pool_size > 1 ? est.lower : 0.0;
    out.margin_mean = opt.pool_size > 1 ? est.mean : 0.0;
    out.mean_rewards = est.means;
    out.rounds = round + 1;
    if (opt.gamma <= 0.0 || opt.pool_size == 1 || est.lower >= opt.gamma) return out;
    if (round + 1 >= opt.max_retries)
      throw CalibrationError("build_planted_world: margin " + std::to_string(est.lower) + " (mean " +
                             std::to_string(est.mean) + ") below target " + std::to_string(opt.gamma) + " after " +
                             std::to_string(round + 1) + " rounds");
    if (base.planted_edge_bonus == 0.0) {
      base.planted_edge_bonus = 0.05;
      base.offplant_penalty = 0.05 * opt.penalty_ratio;
    } else {
      base.planted_edge_bonus *= opt.growth;
      base.offplant_penalty *= opt.growth;
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json world_params_to_json(const WorldParams& w) {
  nlohmann::json j;
  j["synth_weight"] = w.synth_weight;
  j["proposer_weight"] = w.proposer_weight;
  j["neighbor_weight"] = w.neighbor_weight;
  j["dilution_penalty"] = w.dilution_penalty;
  j["synth_capacity"] = w.synth_capacity;
  j["planted_edge_bonus"] = w.planted_edge_bonus;
  j["offplant_penalty"] = w.offplant_penalty;
  j["base_tokens_in"] = w.base_tokens_in;
  j["base_tokens_out"] = w.base_tokens_out;
  j["per_message_tokens"] = w.per_message_tokens;
  j["cost_budget"] = w.cost_budget;
  j["proposer_aggregation"] = w.proposer_aggregation == ProposerAggregation::max ? "max" : "mean";
  j["planted"] = w.planted ? graph_to_json(*w.planted) : nlohmann::json(nullptr);
  return j;
}

// Missing keys keep their defaults.
inline WorldParams world_params_from_json(const nlohmann::json& j) {
  WorldParams w;
  try {
    w.synth_weight = j.value("synth_weight", w.synth_weight);
    w.proposer_weight = j.value("proposer_weight", w.proposer_weight);
    w.neighbor_weight = j.value("neighbor_weight", w.neighbor_weight);
    w.dilution_penalty = j.value("dilution_penalty", w.dilution_penalty);
    w.synth_capacity = j.value("synth_capacity", w.synth_capacity);
    w.planted_edge_bonus = j.value("planted_edge_bonus", w.planted_edge_bonus);
    w.offplant_penalty = j.value("offplant_penalty", w.offplant_penalty);
    w.base_tokens_in = j.value("base_tokens_in", w.base_tokens_in);
    w.base_tokens_out = j.value("base_tokens_out", w.base_tokens_out);
    w.per_message_tokens = j.value("per_message_tokens", w.per_message_tokens);
    w.cost_budget = j.value("cost_budget", w.cost_budget);
    const std::string agg = j.value("proposer_aggregation", std::string("max"));
    if (agg == "max") w.proposer_aggregation = ProposerAggregation::max;
    else if (agg == "mean") w.proposer_aggregation = ProposerAggregation::mean;
    else throw ValidationError("world: proposer_aggregation must be 'max' or 'mean'");
    if (j.contains("planted") && !j["planted"].is_null()) w.planted = graph_from_json(j["planted"]);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("world: ") + ex.what());
  }
  w.validate();
  return w;
}

}  // namespace mastune
