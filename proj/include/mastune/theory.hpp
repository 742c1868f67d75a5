#pragma once

// Empirical checks of the credit-assignment analysis: the alpha threshold for
// node-level correction, the per-edge gradient error rate, the Hoeffding
// sample bound for holistic graph identification, and a per-edge REINFORCE
// strawman trained on the same executions as the graph scorer.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mastune/error.hpp"
#include "mastune/graphs.hpp"
#include "mastune/nn.hpp"
#include "mastune/parallel.hpp"
#include "mastune/policy.hpp"
#include "mastune/rewards.hpp"
#include "mastune/rng.hpp"
#include "mastune/trainer.hpp"
#include "mastune/world.hpp"

namespace mastune {

// Smallest alpha at which the effective reward of a failing node turns negative.
inline double alpha_threshold(double r_final, double r_node) {
  if (!(r_node < 0.0 && r_final > 0.0))
    throw ValidationError("alpha_threshold: requires r_node < 0 < r_final");
  return r_final / (r_final - r_node);
}

// ---------------------------------------------------------------------------
// Gradient bias under final-only reward

struct BiasScenario {
  std::size_t role_index = 0;
  std::size_t chosen_model = 0;  // the failing action
  double r_node = -1.0;
  double r_final = 1.0;
  double lr = 2e-3;
  std::uint64_t seed = 0;
};

struct BiasStep {
  double alpha = 0.0;
  double r_eff = 0.0;
  double pi_before = 0.0;
  double pi_after = 0.0;
  bool params_unchanged = false;
};

// One Adam step (no weight decay, no entropy bonus) on a single synthesizer
// decision whose supernode gets R_eff = alpha R_node + (1 - alpha) R_final.
inline BiasStep gradient_bias_step(const SearchSpace& space, const Task& task, const BiasScenario& sc, double alpha) {
  Rng rng(mix_seed(sc.seed, 0xB1A5));
  SelectorPolicy policy = make_selector(space.embed_dim(), rng, 1.0, 0.0);
  const PositionType pos = PositionType::synthesizer;
  BiasStep out;
  out.alpha = alpha;
  out.r_eff = effective_reward(sc.r_node, sc.r_final, alpha, true);
  const Vec before = selection_distribution(policy, space, task, sc.role_index, pos);
  out.pi_before = before[static_cast<Eigen::Index>(sc.chosen_model)];

  PolicySample sample;
  sample.task = &task;
  sample.roles = {sc.role_index};
  SampledDecision d;
  d.supernode = 0;
  d.position_type = pos;
  d.model_index = sc.chosen_model;
  d.probs = before;
  d.log_prob = std::log(out.pi_before);
  sample.decisions.push_back(d);
  sample.effective_rewards = {out.r_eff};
  const std::vector<PolicySample> batch{sample};

  const Mlp snapshot = policy.scorer;
  PolicyGradient g = reinforce_gradients(policy, space, batch);
  AdamState adam;
  adam.lr = sc.lr;
  adam.weight_decay = 0.0;
  adam_step(adam, views_of(policy.scorer, "scorer"), views_of(g.grads, "scorer"));
  out.params_unchanged = true;
  for (std::size_t l = 0; l < snapshot.layers.size(); ++l)
    out.params_unchanged = out.params_unchanged && snapshot.layers[l].weight == policy.scorer.layers[l].weight &&
                           snapshot.layers[l].bias == policy.scorer.layers[l].bias;
  out.pi_after = selection_distribution(policy, space, task, sc.role_index, pos)[static_cast<Eigen::Index>(sc.chosen_model)];
  return out;
}

struct AlphaSweep {
  std::vector<BiasStep> steps;
  double predicted_threshold = 0.0;
  double first_decrease = std::numeric_limits<double>::quiet_NaN();  // smallest alpha with pi_after < pi_before
};

inline AlphaSweep alpha_sweep(const SearchSpace& space, const Task& task, const BiasScenario& sc, double step = 0.05) {
  if (!(step > 0.0 && step <= 1.0)) throw ValidationError("alpha_sweep: step must lie in (0, 1]");
  AlphaSweep s;
  s.predicted_threshold = alpha_threshold(sc.r_final, sc.r_node);
  const auto count = static_cast<std::size_t>(std::llround(1.0 / step));
  for (std::size_t k = 0; k <= count; ++k) {
    const double alpha = std::min(1.0, static_cast<double>(k) / static_cast<double>(count));
    s.steps.push_back(gradient_bias_step(space, task, sc, alpha));
    if (std::isnan(s.first_decrease) && s.steps.back().pi_after < s.steps.back().pi_before) s.first_decrease = alpha;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Per-edge gradient error

struct EdgeErrorSetup {
  std::size_t edge_count = 100;
  double rho = 0.1;  // fraction of edges in the planted graph
  double p = 0.5;    // edge sample probability
  double q = 0.8;    // probability of positive final reward
  std::size_t trials = 100000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct EdgeErrorResult {
  double empirical = 0.0;
  double predicted = 0.0;
  double lower_bound = 0.0;  // (1 - rho) p q
  double tolerance = 0.0;    // 3 sqrt(v / trials) at the predicted rate
  std::size_t planted_edges = 0;
};

inline double edge_error_closed_form(double p, double q, double rho) { return p * (q * (1.0 - 2.0 * rho) + rho); }

// Per trial: one reward sign for the whole graph, then each edge is sampled
// with probability p. A sampled planted edge errs under negative reward, a
// sampled non-planted edge errs under positive reward. Counts are averaged
// over (trial, edge) pairs.
inline EdgeErrorResult edge_error_mc(const EdgeErrorSetup& s) {
  for (double v : {s.rho, s.p, s.q})
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("edge_error_mc: rho, p and q must lie in [0, 1]");
  if (s.trials == 0) throw ValidationError("edge_error_mc: trials must be >= 1");
  if (s.edge_count == 0) throw ValidationError("edge_error_mc: edge_count must be >= 1");
  EdgeErrorResult r;
  r.planted_edges = static_cast<std::size_t>(std::llround(s.rho * static_cast<double>(s.edge_count)));
  const double rho_eff = static_cast<double>(r.planted_edges) / static_cast<double>(s.edge_count);
  r.predicted = edge_error_closed_form(s.p, s.q, rho_eff);
  r.lower_bound = (1.0 - rho_eff) * s.p * s.q;
  r.tolerance = 3.0 * std::sqrt(r.predicted * (1.0 - r.predicted) / static_cast<double>(s.trials));

  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(64, s.trials));
  std::vector<std::uint64_t> errors(chunks, 0);
  parallel_for(chunks, s.threads, [&](std::size_t c) {
    const std::size_t lo = s.trials * c / chunks, hi = s.trials * (c + 1) / chunks;
    Rng rng(mix_seed(s.seed, 0xED6E, c));
    std::uint64_t e = 0;
    for (std::size_t t = lo; t < hi; ++t) {
      const bool positive = rng.bernoulli(s.q);
      for (std::size_t k = 0; k < s.edge_count; ++k) {
        if (!rng.bernoulli(s.p)) continue;
        const bool planted = k < r.planted_edges;
        e += planted ? !positive : positive;
      }
    }
    errors[c] = e;
  });
  std::uint64_t total = 0;
  for (auto e : errors) total += e;
  r.empirical = static_cast<double>(total) / (static_cast<double>(s.trials) * static_cast<double>(s.edge_count));
  return r;
}

// ---------------------------------------------------------------------------
// Holistic identification bound

inline std::size_t hoeffding_samples(double bound, double gamma, std::size_t k, double delta) {
  if (!(bound > 0.0 && gamma > 0.0 && k >= 1 && delta > 0.0 && delta < 1.0))
    throw ValidationError("hoeffding_samples: requires B > 0, gamma > 0, K >= 1, 0 < delta < 1");
  const double n = 8.0 * bound * bound * std::log(2.0 * static_cast<double>(k) / delta) / (gamma * gamma);
  // The slack keeps exact-integer cases (e.g. delta = 2/e^2) from rounding up.
  return static_cast<std::size_t>(std::ceil(n - 1e-9));
}

struct BanditSetup {
  std::vector<double> means;  // arm means in [-B, B]
  std::size_t best = 0;       // planted optimum
  double gamma = 0.2;
  double bound = 1.0;
  std::size_t samples_per_arm = 1;

  void validate() const {
    if (means.empty()) throw ValidationError("bandit: need at least one arm");
    if (best >= means.size()) throw ValidationError("bandit: best arm index out of range");
    if (!(bound > 0.0)) throw ValidationError("bandit: B must be > 0");
    if (samples_per_arm == 0) throw ValidationError("bandit: N_k must be >= 1");
    for (std::size_t k = 0; k < means.size(); ++k) {
      if (std::abs(means[k]) > bound + 1e-12) throw ValidationError("bandit: arm mean outside [-B, B]");
      if (k != best && means[best] - means[k] < gamma - 1e-12)
        throw ValidationError("bandit: arm " + std::to_string(k) + " violates the margin");
    }
  }
};

// Best arm at +gamma/2, every rival exactly at the margin, best arm placed at
// a seeded position.
inline BanditSetup margin_bandit(std::size_t k, double bound, double gamma, std::size_t samples, std::uint64_t seed) {
  if (gamma > 2.0 * bound) throw ValidationError("bandit: gamma cannot exceed 2B");
  BanditSetup s;
  s.bound = bound;
  s.gamma = gamma;
  s.samples_per_arm = samples;
  Rng rng(mix_seed(seed, 0xBE57));
  s.best = static_cast<std::size_t>(rng.below(k));
  s.means.assign(k, -gamma / 2.0);
  s.means[s.best] = gamma / 2.0;
  s.validate();
  return s;
}

// Two-point rewards on {-B, +B} with the configured means (maximal variance).
// Success requires the planted arm to be the strict empirical argmax.
inline bool best_arm_trial(const BanditSetup& s, Rng& rng) {
  s.validate();
  if (s.means.size() == 1) return true;
  std::vector<double> mean_hat(s.means.size());
  for (std::size_t k = 0; k < s.means.size(); ++k) {
    const double up = 0.5 * (1.0 + s.means[k] / s.bound);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < s.samples_per_arm; ++i) hits += rng.bernoulli(up);
    mean_hat[k] = s.bound * (2.0 * static_cast<double>(hits) - static_cast<double>(s.samples_per_arm)) /
                  static_cast<double>(s.samples_per_arm);
  }
  for (std::size_t k = 0; k < mean_hat.size(); ++k)
    if (k != s.best && mean_hat[k] >= mean_hat[s.best]) return false;
  return true;
}

inline double best_arm_success_rate(const BanditSetup& s, std::size_t trials, std::uint64_t seed,
                                    std::size_t threads = 1) {
  if (trials == 0) throw ValidationError("best_arm_success_rate: trials must be >= 1");
  std::vector<char> ok(trials, 0);
  parallel_for(trials, threads, [&](std::size_t t) {
    Rng rng(mix_seed(seed, 0x7A1, t));
    ok[t] = best_arm_trial(s, rng);
  });
  std::size_t n = 0;
  for (char c : ok) n += c;
  return static_cast<double>(n) / static_cast<double>(trials);
}

// ---------------------------------------------------------------------------
// Per-edge REINFORCE strawman

struct StrawmanConfig {
  std::size_t iterations = 25;
  std::size_t batch_size = 8;
  double lr = 0.05;
  std::size_t proposers = 2;
  std::uint64_t seed = 0;
};

struct StrawmanResult {
  std::vector<Edge> candidates;  // forward pairs of the planted graph's order
  std::vector<double> initial_probs;
  std::vector<double> probs;
  std::vector<Edge> recovered;  // candidates with probability > 0.5
  bool exact_recovery = false;
  double wrong_direction_fraction = 0.0;
  double per_step_error_rate = 0.0;  // wrong-sign edge gradients per (sample, edge)
};

// Independent Bernoulli logits per candidate edge, REINFORCE on the final
// reward with no baseline, the frozen policy's greedy model choice at every
// supernode. Candidates are the forward pairs of the planted graph's
// topological order, so every sample is acyclic and G* is reachable.
inline StrawmanResult per_edge_strawman_train(const std::vector<Task>& tasks, const SelectorPolicy& policy,
                                              const Environment& env, const DagTopology& star,
                                              const StrawmanConfig& cfg) {
  env.check();
  if (tasks.empty()) throw ValidationError("strawman: empty task set");
  if (star.num_nodes() != env.roles.size()) throw ShapeError("strawman: planted graph size mismatch");
  StrawmanResult out;
  const std::vector<std::size_t> order = topo_order(star);
  for (std::size_t a = 0; a < order.size(); ++a)
    for (std::size_t b = a + 1; b < order.size(); ++b) out.candidates.emplace_back(order[a], order[b]);
  const std::size_t m = out.candidates.size();
  Mlp logits;
  logits.layers.push_back(Dense{Mat::Zero(static_cast<Eigen::Index>(m), 1), Vec::Zero(static_cast<Eigen::Index>(m))});
  AdamState adam;
  adam.lr = cfg.lr;
  adam.weight_decay = 0.0;
  const auto roles = env.role_profiles();
  auto prob = [&](std::size_t e) { return sigmoid(logits.layers[0].bias[static_cast<Eigen::Index>(e)]); };
  for (std::size_t e = 0; e < m; ++e) out.initial_probs.push_back(prob(e));
  std::size_t errs = 0, counted = 0;
  // greedy assignments ignore the topology, so each task's is computed once
  std::vector<std::optional<SystemConfiguration>> greedy(tasks.size());

  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    Mlp grads = zeros_like(logits);
    Rng rng(mix_seed(cfg.seed, 0x57A3, t));
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto ti = static_cast<std::size_t>(rng.below(tasks.size()));
      const Task& task = tasks[ti];
      std::vector<Edge> chosen;
      std::vector<bool> inc(m);
      for (std::size_t e = 0; e < m; ++e) {
        inc[e] = rng.bernoulli(prob(e));
        if (inc[e]) chosen.push_back(out.candidates[e]);
      }
      if (!greedy[ti]) greedy[ti] = greedy_configuration(policy, *env.space, task, env.roles, cfg.proposers, star);
      SystemConfiguration& c = *greedy[ti];
      c.topology = DagTopology::from_edges(-1, star.num_nodes(), chosen);
      const ExecutionTrace tr =
          execute_system(c, *env.space, *env.backend, env.world, mix_seed(cfg.seed, 0xE5, t, b));
      const double r = trace_rewards(tr, roles, env.rewards).final_reward;
      for (std::size_t e = 0; e < m; ++e) {
        const double x = inc[e] ? 1.0 : 0.0;
        // d/dtheta of -log p(x) R
        grads.layers[0].bias[static_cast<Eigen::Index>(e)] -= (x - prob(e)) * r / static_cast<double>(cfg.batch_size);
        ++counted;
        if (inc[e]) {
          const bool planted = star.has_edge(out.candidates[e].first, out.candidates[e].second);
          errs += planted ? (r < 0.0) : (r > 0.0);
        }
      }
    }
    adam_step(adam, views_of(logits, "edges"), views_of(grads, "edges"));
  }
  std::size_t wrong = 0;
  out.exact_recovery = true;
  for (std::size_t e = 0; e < m; ++e) {
    const double p = prob(e);
    out.probs.push_back(p);
    const bool planted = star.has_edge(out.candidates[e].first, out.candidates[e].second);
    if (p > 0.5) out.recovered.push_back(out.candidates[e]);
    if ((p > 0.5) != planted) out.exact_recovery = false;
    if (planted ? p < out.initial_probs[e] : p > out.initial_probs[e]) ++wrong;
  }
  out.wrong_direction_fraction = m ? static_cast<double>(wrong) / static_cast<double>(m) : 0.0;
  out.per_step_error_rate = counted ? static_cast<double>(errs) / static_cast<double>(counted) : 0.0;
  return out;
}

inline nlohmann::json strawman_to_json(const StrawmanResult& s) {
  nlohmann::json j;
  j["candidates"] = s.candidates;
  j["probs"] = s.probs;
  j["recovered"] = s.recovered;
  j["exact_recovery"] = s.exact_recovery;
  j["wrong_direction_fraction"] = s.wrong_direction_fraction;
  j["per_step_error_rate"] = s.per_step_error_rate;
  return j;
}

}  // namespace mastune
