#pragma once

// LLM selector: scores every (query+role, model, position type) triple with
// an MLP, samples full supernode configurations with skip semantics, and
// computes the REINFORCE + entropy gradients of the Stage-1 objective.

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mastune/error.hpp"
#include "mastune/graphs.hpp"
#include "mastune/nn.hpp"
#include "mastune/rng.hpp"
#include "mastune/searchspace.hpp"

namespace mastune {

enum class PositionType : int { proposer = 0, synthesizer = 1 };

inline const char* to_string(PositionType p) { return p == PositionType::proposer ? "proposer" : "synthesizer"; }

struct SelectorPolicy {
  Mlp scorer;  // [h_ctx, h_model, position one-hot] -> 128 -> 64 -> 1
  double temperature = 1.0;
  double entropy_weight = 0.01;
};

inline SelectorPolicy make_selector(int embed_dim, Rng& rng, double temperature = 1.0, double entropy_weight = 0.01) {
  if (!(temperature > 0.0)) throw ValidationError("selector: temperature must be > 0");
  if (!(entropy_weight >= 0.0)) throw ValidationError("selector: entropy_weight must be >= 0");
  SelectorPolicy p;
  p.scorer = make_mlp({2 * embed_dim + 2, 128, 64, 1}, rng);
  p.temperature = temperature;
  p.entropy_weight = entropy_weight;
  return p;
}

struct SupernodeAssignment {
  std::size_t supernode_index = 0;
  std::size_t role_index = 0;
  std::vector<std::size_t> proposer_models;  // W entries, skip allowed
  std::size_t synthesizer_model = 0;
  bool active = true;  // false iff the synthesizer is the skip token
};

struct SystemConfiguration {
  std::vector<SupernodeAssignment> assignments;
  DagTopology topology;
  Task task;
};

struct SampledDecision {
  std::size_t position_id = 0;
  std::size_t supernode = 0;
  PositionType position_type = PositionType::proposer;
  std::size_t model_index = 0;
  double log_prob = 0.0;
  Vec probs;
};

// One column per model in the pool.
inline Mat scorer_inputs(const SearchSpace& space, const Vec& ctx, PositionType pos) {
  const Eigen::Index d = space.embed_dim();
  const auto m = static_cast<Eigen::Index>(space.num_models());
  Mat x = Mat::Zero(2 * d + 2, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    x.col(k).head(d) = ctx;
    x.col(k).segment(d, d) = space.model_embedding(static_cast<std::size_t>(k));
    x(2 * d + static_cast<int>(pos), k) = 1.0;
  }
  return x;
}

inline Vec selection_scores(const SelectorPolicy& policy, const SearchSpace& space, const Vec& ctx, PositionType pos,
                            MlpCache* cache = nullptr) {
  if (space.num_models() == 0) throw ValidationError("selection: empty model pool");
  const Mat s = mlp_forward(policy.scorer, scorer_inputs(space, ctx, pos), cache);
  return s.row(0).transpose();
}

inline Vec selection_distribution(const SelectorPolicy& policy, const SearchSpace& space, const Vec& ctx,
                                  PositionType pos) {
  return softmax(selection_scores(policy, space, ctx, pos), policy.temperature);
}

inline Vec selection_distribution(const SelectorPolicy& policy, const SearchSpace& space, const Task& task,
                                  std::size_t role_index, PositionType pos) {
  return selection_distribution(policy, space, context_embedding(task, space.roles().at(role_index), space), pos);
}

// Shannon entropy in nats with 0 log 0 = 0.
inline double position_entropy(const Vec& probs) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  return h;
}

inline std::size_t position_id(std::size_t supernode, std::size_t slot, std::size_t proposers) {
  return supernode * (proposers + 1) + slot;
}

inline std::size_t argmax_index(const Vec& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<std::size_t>(best);
}

namespace detail {

inline void check_configuration_shape(const std::vector<std::size_t>& roles, const DagTopology& topology) {
  if (roles.size() != topology.num_nodes())
    throw ShapeError("configuration: " + std::to_string(roles.size()) + " roles for a " +
                     std::to_string(topology.num_nodes()) + "-node topology");
}

}  // namespace detail

// Each supernode samples W proposer positions and one synthesizer position
// from its own stream. Skipped proposers are dropped at execution; a skipped
// synthesizer deactivates the supernode. Every sampled position is recorded,
// including positions inside deactivated supernodes.
inline std::pair<SystemConfiguration, std::vector<SampledDecision>> sample_configuration(
    const SelectorPolicy& policy, const SearchSpace& space, const Task& task, const std::vector<std::size_t>& roles,
    std::size_t proposers, const DagTopology& topology, std::uint64_t seed) {
  detail::check_configuration_shape(roles, topology);
  SystemConfiguration cfg;
  cfg.topology = topology;
  cfg.task = task;
  std::vector<SampledDecision> decisions;
  const std::uint64_t task_key = fnv1a64(task.task_id);
  for (std::size_t i = 0; i < roles.size(); ++i) {
    const Vec ctx = context_embedding(task, space.roles().at(roles[i]), space);
    const Vec p_prop = selection_distribution(policy, space, ctx, PositionType::proposer);
    const Vec p_syn = selection_distribution(policy, space, ctx, PositionType::synthesizer);
    SupernodeAssignment a;
    a.supernode_index = i;
    a.role_index = roles[i];
    for (std::size_t slot = 0; slot <= proposers; ++slot) {
      const bool syn = slot == proposers;
      const Vec& probs = syn ? p_syn : p_prop;
      const std::size_t pid = position_id(i, slot, proposers);
      Rng rng(mix_seed(seed, task_key, pid));
      const std::size_t choice = rng.categorical(probs);
      SampledDecision d;
      d.position_id = pid;
      d.supernode = i;
      d.position_type = syn ? PositionType::synthesizer : PositionType::proposer;
      d.model_index = choice;
      d.log_prob = std::log(probs[static_cast<Eigen::Index>(choice)]);
      d.probs = probs;
      decisions.push_back(std::move(d));
      if (syn) a.synthesizer_model = choice;
      else a.proposer_models.push_back(choice);
    }
    a.active = a.synthesizer_model != space.skip_index();
    cfg.assignments.push_back(std::move(a));
  }
  return {std::move(cfg), std::move(decisions)};
}

// Argmax at every position (lowest index on ties); W proposers share one choice.
inline SystemConfiguration greedy_configuration(const SelectorPolicy& policy, const SearchSpace& space,
                                                const Task& task, const std::vector<std::size_t>& roles,
                                                std::size_t proposers, const DagTopology& topology) {
  detail::check_configuration_shape(roles, topology);
  SystemConfiguration cfg;
  cfg.topology = topology;
  cfg.task = task;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    const Vec ctx = context_embedding(task, space.roles().at(roles[i]), space);
    SupernodeAssignment a;
    a.supernode_index = i;
    a.role_index = roles[i];
    a.proposer_models.assign(proposers, argmax_index(selection_scores(policy, space, ctx, PositionType::proposer)));
    a.synthesizer_model = argmax_index(selection_scores(policy, space, ctx, PositionType::synthesizer));
    a.active = a.synthesizer_model != space.skip_index();
    cfg.assignments.push_back(std::move(a));
  }
  return cfg;
}

// Same model at every position (the "no LLM selection" ablation).
inline SystemConfiguration fixed_configuration(std::size_t model, const SearchSpace& space, const Task& task,
                                               const std::vector<std::size_t>& roles, std::size_t proposers,
                                               const DagTopology& topology) {
  detail::check_configuration_shape(roles, topology);
  SystemConfiguration cfg;
  cfg.topology = topology;
  cfg.task = task;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    SupernodeAssignment a;
    a.supernode_index = i;
    a.role_index = roles[i];
    a.proposer_models.assign(proposers, model);
    a.synthesizer_model = model;
    a.active = model != space.skip_index();
    cfg.assignments.push_back(std::move(a));
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Stage-1 objective

// One executed rollout: decisions plus the effective reward of each supernode.
struct PolicySample {
  const Task* task = nullptr;
  std::vector<std::size_t> roles;
  std::vector<SampledDecision> decisions;
  std::vector<double> effective_rewards;
};

struct PolicyGradient {
  Mlp grads;
  double loss = 0.0;
};

// Batch mean of  -sum_p log pi(chosen_p) R_eff(node(p)) - lambda_H sum_p H(pi_p).
// Positions that share an input (the W proposers of a supernode) are
// accumulated into one backward pass.
inline PolicyGradient reinforce_gradients(const SelectorPolicy& policy, const SearchSpace& space,
                                          std::span<const PolicySample> batch, bool want_grads = true) {
  PolicyGradient out;
  out.grads = zeros_like(policy.scorer);
  if (batch.empty()) return out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double tau = policy.temperature;
  const double lam = policy.entropy_weight;
  for (const auto& sample : batch) {
    if (!sample.task) throw ValidationError("reinforce_gradients: sample without task");
    for (double r : sample.effective_rewards)
      if (!std::isfinite(r)) throw NumericError("reinforce_gradients: non-finite reward");
    for (std::size_t node = 0; node < sample.roles.size(); ++node) {
      for (PositionType pos : {PositionType::proposer, PositionType::synthesizer}) {
        std::vector<const SampledDecision*> group;
        for (const auto& d : sample.decisions)
          if (d.supernode == node && d.position_type == pos) group.push_back(&d);
        if (group.empty()) continue;
        if (node >= sample.effective_rewards.size())
          throw ValidationError("reinforce_gradients: missing effective reward for supernode " + std::to_string(node));
        const double reward = sample.effective_rewards[node];
        const Vec ctx = context_embedding(*sample.task, space.roles().at(sample.roles[node]), space);
        MlpCache cache;
        const Vec scores = selection_scores(policy, space, ctx, pos, want_grads ? &cache : nullptr);
        const Vec probs = softmax(scores, tau);
        const double ent = position_entropy(probs);
        Vec d_logits = Vec::Zero(probs.size());  // d loss / d (scores / tau)
        for (const SampledDecision* d : group) {
          const auto c = static_cast<Eigen::Index>(d->model_index);
          out.loss += inv_b * (-std::log(probs[c]) * reward - lam * ent);
          Vec g = probs * reward;
          g[c] -= reward;
          for (Eigen::Index l = 0; l < probs.size(); ++l)
            if (probs[l] > 0.0) g[l] += lam * probs[l] * (std::log(probs[l]) + ent);
          d_logits += g;
        }
        if (!want_grads) continue;
        const Mat d_scores = (d_logits * (inv_b / tau)).transpose();
        mlp_backward_add(policy.scorer, cache, d_scores, 1.0, out.grads, false);
      }
    }
  }
  return out;
}

inline double stage1_loss(const SelectorPolicy& policy, const SearchSpace& space, std::span<const PolicySample> batch) {
  return reinforce_gradients(policy, space, batch, false).loss;
}

// ---------------------------------------------------------------------------
// Checkpoint

inline nlohmann::json selector_to_json(SelectorPolicy& policy, std::size_t proposers, const SearchSpace& space,
                                       const AdamState* adam = nullptr) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "selector";
  j["temperature"] = policy.temperature;
  j["entropy_weight"] = policy.entropy_weight;
  j["proposers"] = proposers;
  j["embed_dim"] = space.embed_dim();
  j["pool_fingerprint"] = space.fingerprint();
  j["tensors"] = tensors_to_json(views_of(policy.scorer, "scorer"));
  if (adam) j["adam"] = adam_to_json(*adam);
  return j;
}

struct LoadedSelector {
  SelectorPolicy policy;
  std::size_t proposers = 2;
};

inline LoadedSelector selector_from_json(const nlohmann::json& j, const SearchSpace& space) {
  if (j.value("kind", std::string{}) != "selector") throw ParseError("checkpoint is not a selector");
  if (j.at("pool_fingerprint").get<std::string>() != space.fingerprint())
    throw ValidationError("selector checkpoint was trained on a different model pool (fingerprint mismatch)");
  Rng rng(0);
  LoadedSelector out;
  out.policy = make_selector(j.at("embed_dim").get<int>(), rng, j.at("temperature").get<double>(),
                             j.at("entropy_weight").get<double>());
  out.proposers = j.at("proposers").get<std::size_t>();
  tensors_from_json(j.at("tensors"), views_of(out.policy.scorer, "scorer"));
  return out;
}

}  // namespace mastune
