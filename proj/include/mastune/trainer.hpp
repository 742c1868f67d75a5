#pragma once

// Two-stage training. Stage 1 fits the LLM selector by REINFORCE over random
// pool topologies; Stage 2 freezes it, labels pool graphs by executed reward,
// and fits the graph scorer with BCE, early stopping and a dropout grid.
// Evaluation of the learned system against the ablation baselines lives here too.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mastune/classifier.hpp"
#include "mastune/error.hpp"
#include "mastune/graphs.hpp"
#include "mastune/nn.hpp"
#include "mastune/parallel.hpp"
#include "mastune/policy.hpp"
#include "mastune/rewards.hpp"
#include "mastune/rng.hpp"
#include "mastune/searchspace.hpp"
#include "mastune/world.hpp"

namespace mastune {

// Everything an executed rollout needs besides the configuration itself.
struct Environment {
  const SearchSpace* space = nullptr;
  std::vector<std::size_t> roles;  // role index of each supernode
  const GraphPool* pool = nullptr;
  WorldParams world;
  const AgentBackend* backend = nullptr;
  RewardParams rewards;

  std::vector<const RoleProfile*> role_profiles() const {
    std::vector<const RoleProfile*> out;
    for (std::size_t r : roles) out.push_back(&space->roles().at(r));
    return out;
  }

  void check() const {
    if (!space || !pool || !backend) throw ValidationError("environment: space, pool and backend are required");
    if (roles.empty()) throw ValidationError("environment: at least one supernode role required");
    if (pool->num_nodes() != roles.size())
      throw ShapeError("environment: pool graphs have " + std::to_string(pool->num_nodes()) + " nodes for " +
                       std::to_string(roles.size()) + " roles");
    world.validate();
    rewards.validate();
  }
};

struct TaskSplit {
  std::vector<Task> train;
  std::vector<Task> heldout;
};

// Seeded shuffle, then the first `train_fraction` go to training; each side
// keeps the original task order.
inline TaskSplit split_tasks(const std::vector<Task>& tasks, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ValidationError("split: fraction must lie in (0, 1]");
  std::vector<std::size_t> idx(tasks.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x5B117));
  rng.shuffle(idx);
  const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(tasks.size())));
  std::vector<bool> is_train(tasks.size(), false);
  for (std::size_t i = 0; i < cut && i < idx.size(); ++i) is_train[idx[i]] = true;
  TaskSplit s;
  for (std::size_t i = 0; i < tasks.size(); ++i) (is_train[i] ? s.train : s.heldout).push_back(tasks[i]);
  return s;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Stage 1

struct Stage1Config {
  std::size_t iterations = 10;
  std::size_t batch_size = 8;
  double lr = 2e-3;
  double weight_decay = 5e-4;
  std::size_t proposers = 2;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool log_timing = false;

  void validate() const {
    if (batch_size == 0) throw ValidationError("stage1: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ValidationError("stage1: lr must be > 0");
    if (!(weight_decay >= 0.0)) throw ValidationError("stage1: weight_decay must be >= 0");
  }
};

struct Stage1Record {
  std::size_t iteration = 0;
  double mean_final_reward = 0.0;
  double mean_effective_reward = 0.0;
  double accuracy = 0.0;
  double mean_cost = 0.0;
  double loss = 0.0;
  double entropy_proposer = 0.0;
  double entropy_synthesizer = 0.0;
  double active_fraction = 0.0;
};

inline nlohmann::json to_json(const Stage1Record& r) {
  return {{"stage", 1},
          {"iteration", r.iteration},
          {"mean_final_reward", r.mean_final_reward},
          {"mean_effective_reward", r.mean_effective_reward},
          {"accuracy", r.accuracy},
          {"mean_cost", r.mean_cost},
          {"loss", r.loss},
          {"entropy_proposer", r.entropy_proposer},
          {"entropy_synthesizer", r.entropy_synthesizer},
          {"active_fraction", r.active_fraction}};
}

// Pool slot drawn for batch item b of iteration t; uniform over the pool.
inline std::size_t stage1_graph_draw(std::uint64_t seed, std::size_t iteration, std::size_t item, std::size_t k) {
  Rng rng(mix_seed(seed, 0x6A, iteration, item));
  return static_cast<std::size_t>(rng.below(k));
}

struct Stage1Result {
  std::vector<Stage1Record> log;
};

inline Stage1Result stage1_train(const std::vector<Task>& tasks, const Environment& env, SelectorPolicy& policy,
                                 AdamState& adam, const Stage1Config& cfg, std::ostream* log = nullptr) {
  env.check();
  cfg.validate();
  if (tasks.empty()) throw ValidationError("stage1: empty training set");
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  const auto roles = env.role_profiles();
  const std::size_t threads = env.backend->concurrent_safe() ? cfg.threads : 1;
  Stage1Result result;

  struct Item {
    PolicySample sample;
    double final_reward = 0.0;
    double mean_effective = 0.0;
    double cost = 0.0;
    int correct = -1;
    std::size_t active = 0;
  };

  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng batch_rng(mix_seed(cfg.seed, 0xBA7C, t));
    std::vector<std::size_t> picks(cfg.batch_size);
    for (auto& p : picks) p = static_cast<std::size_t>(batch_rng.below(tasks.size()));

    std::vector<Item> items(cfg.batch_size);
    parallel_for(cfg.batch_size, threads, [&](std::size_t b) {
      const Task& task = tasks[picks[b]];
      const DagTopology& g = env.pool->graphs[stage1_graph_draw(cfg.seed, t, b, env.pool->size())];
      auto [config, decisions] = sample_configuration(policy, *env.space, task, env.roles, cfg.proposers, g,
                                                      mix_seed(cfg.seed, 0x5A3, t, b));
      const ExecutionTrace trace =
          execute_system(config, *env.space, *env.backend, env.world, mix_seed(cfg.seed, 0xE1, t, b));
      const TraceRewards r = trace_rewards(trace, roles, env.rewards);
      Item& it = items[b];
      it.sample.task = &task;
      it.sample.roles = env.roles;
      it.sample.decisions = std::move(decisions);
      it.sample.effective_rewards = r.effective;
      it.final_reward = r.final_reward;
      it.mean_effective = std::accumulate(r.effective.begin(), r.effective.end(), 0.0) /
                          static_cast<double>(r.effective.size());
      it.cost = trace.total_cost;
      it.correct = trace.final_correct;
      for (const auto& a : config.assignments) it.active += a.active;
    });

    std::vector<PolicySample> batch;
    batch.reserve(items.size());
    Stage1Record rec;
    rec.iteration = t;
    double ent_p = 0.0, ent_s = 0.0;
    std::size_t n_p = 0, n_s = 0;
    for (auto& it : items) {
      rec.mean_final_reward += it.final_reward;
      rec.mean_effective_reward += it.mean_effective;
      rec.accuracy += it.correct == 1;
      rec.mean_cost += it.cost;
      rec.active_fraction += static_cast<double>(it.active) / static_cast<double>(env.roles.size());
      for (const auto& d : it.sample.decisions) {
        if (d.position_type == PositionType::proposer) {
          ent_p += position_entropy(d.probs);
          ++n_p;
        } else {
          ent_s += position_entropy(d.probs);
          ++n_s;
        }
      }
      batch.push_back(std::move(it.sample));
    }
    const double bsz = static_cast<double>(items.size());
    rec.mean_final_reward /= bsz;
    rec.mean_effective_reward /= bsz;
    rec.accuracy /= bsz;
    rec.mean_cost /= bsz;
    rec.active_fraction /= bsz;
    rec.entropy_proposer = n_p ? ent_p / static_cast<double>(n_p) : 0.0;
    rec.entropy_synthesizer = n_s ? ent_s / static_cast<double>(n_s) : 0.0;

    PolicyGradient pg = reinforce_gradients(policy, *env.space, batch);
    rec.loss = pg.loss;
    if (!std::isfinite(pg.loss))
      throw NumericError("stage1: non-finite loss at iteration " + std::to_string(t) +
                         " (mean reward " + std::to_string(rec.mean_final_reward) + ")");
    adam_step(adam, views_of(policy.scorer, "scorer"), views_of(pg.grads, "scorer"));
    result.log.push_back(rec);
    if (log) {
      nlohmann::json j = to_json(rec);
      if (cfg.log_timing) j["wall_clock_ms"] = elapsed_ms(t0);
      *log << j.dump() << '\n';
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Stage 2: labelled graph dataset

struct Stage2Config {
  std::size_t samples_per_query = 5;
  std::size_t positives_per_query = 2;
  std::size_t executions_per_graph = 1;
  std::size_t epochs = 20;
  std::size_t patience = 3;
  std::vector<double> dropout_grid{0.05, 0.1, 0.2, 0.5};
  double train_fraction = 0.8;
  std::size_t batch_size = 16;
  double lr = 2e-3;
  double weight_decay = 5e-4;
  std::size_t proposers = 2;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool log_timing = false;

  void validate() const {
    if (samples_per_query == 0) throw ValidationError("stage2: samples_per_query must be >= 1");
    if (executions_per_graph == 0) throw ValidationError("stage2: executions_per_graph must be >= 1");
    if (dropout_grid.empty()) throw ValidationError("stage2: dropout grid is empty");
    for (double d : dropout_grid)
      if (!(d >= 0.0 && d < 1.0)) throw ValidationError("stage2: dropout values must lie in [0, 1)");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
      throw ValidationError("stage2: train_fraction must lie in (0, 1]");
    if (batch_size == 0) throw ValidationError("stage2: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ValidationError("stage2: lr must be > 0");
  }
};

struct GraphLabelRecord {
  std::string task_id;
  int graph_id = 0;
  double reward = 0.0;
  int label = 0;
};

// Top `positives` by reward (ties to the lower graph_id), and only if R > 0.
inline std::vector<int> label_top(const std::vector<double>& rewards, const std::vector<int>& graph_ids,
                                  std::size_t positives) {
  if (rewards.size() != graph_ids.size()) throw ShapeError("label_top: rewards/ids length mismatch");
  std::vector<std::size_t> order(rewards.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rewards[a] != rewards[b]) return rewards[a] > rewards[b];
    return graph_ids[a] < graph_ids[b];
  });
  std::vector<int> labels(rewards.size(), 0);
  for (std::size_t r = 0; r < order.size() && r < positives; ++r)
    if (rewards[order[r]] > 0.0) labels[order[r]] = 1;
  return labels;
}

// Greedy selection under the frozen policy; M distinct graphs per task.
inline std::vector<GraphLabelRecord> stage2_generate(const std::vector<Task>& tasks, const SelectorPolicy& policy,
                                                     const Environment& env, const Stage2Config& cfg) {
  env.check();
  cfg.validate();
  const std::size_t m = cfg.samples_per_query;
  if (m > env.pool->size())
    throw ValidationError("stage2: samples_per_query " + std::to_string(m) + " exceeds pool size " +
                          std::to_string(env.pool->size()));
  const auto roles = env.role_profiles();
  const std::size_t threads = env.backend->concurrent_safe() ? cfg.threads : 1;
  std::vector<std::vector<GraphLabelRecord>> per_task(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t ti) {
    const Task& task = tasks[ti];
    const std::uint64_t key = fnv1a64(task.task_id);
    Rng rng(mix_seed(cfg.seed, 0x52, key));
    std::vector<std::size_t> slots(env.pool->size());
    std::iota(slots.begin(), slots.end(), 0);
    for (std::size_t i = 0; i < m; ++i) std::swap(slots[i], slots[i + static_cast<std::size_t>(rng.below(slots.size() - i))]);
    std::vector<double> rewards(m, 0.0);
    std::vector<int> ids(m);
    for (std::size_t i = 0; i < m; ++i) {
      const DagTopology& g = env.pool->graphs[slots[i]];
      ids[i] = g.graph_id();
      const SystemConfiguration c = greedy_configuration(policy, *env.space, task, env.roles, cfg.proposers, g);
      for (std::size_t e = 0; e < cfg.executions_per_graph; ++e) {
        const ExecutionTrace tr = execute_system(
            c, *env.space, *env.backend, env.world,
            mix_seed(cfg.seed, 0xE2, key, static_cast<std::uint64_t>(g.graph_id()), e));
        rewards[i] += trace_rewards(tr, roles, env.rewards).final_reward;
      }
      rewards[i] /= static_cast<double>(cfg.executions_per_graph);
    }
    const std::vector<int> labels = label_top(rewards, ids, cfg.positives_per_query);
    for (std::size_t i = 0; i < m; ++i) per_task[ti].push_back({task.task_id, ids[i], rewards[i], labels[i]});
  });
  std::vector<GraphLabelRecord> out;
  for (auto& v : per_task) out.insert(out.end(), v.begin(), v.end());
  return out;
}

inline void write_records_csv(std::ostream& os, const std::vector<GraphLabelRecord>& records) {
  os << "task_id,graph_id,reward,label\r\n";
  for (const auto& r : records) os << r.task_id << ',' << r.graph_id << ',' << r.reward << ',' << r.label << "\r\n";
}

// ---------------------------------------------------------------------------
// Stage 2: scorer training

struct EpochRecord {
  double dropout = 0.0;
  std::size_t epoch = 0;
  double train_bce = 0.0;
  double val_bce = 0.0;
};

struct Stage2Result {
  GraphScorer scorer;
  double chosen_dropout = 0.0;
  double best_val_bce = 0.0;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> curves;
  std::size_t train_records = 0;
  std::size_t val_records = 0;
  AdamState adam;
};

struct LabelledExample {
  const ScoringInput* input = nullptr;
  const Mat* a_hat = nullptr;
  double label = 0.0;
};

inline double mean_bce(const GraphScorer& s, const std::vector<LabelledExample>& data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : data) total += bce_with_logit(score_graph(s, *ex.input, *ex.a_hat, false, nullptr), ex.label);
  return total / static_cast<double>(data.size());
}

// Splits records by task (train_fraction of tasks), trains one scorer per
// dropout value with early stopping on validation BCE, and keeps the best.
// Epoch 0 (the initial weights) counts as a candidate, so the result is never
// worse on validation than where training started.
inline Stage2Result stage2_train(const std::vector<GraphLabelRecord>& records, const std::vector<Task>& tasks,
                                 const Environment& env, const Stage2Config& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  if (records.empty()) throw ValidationError("stage2_train: no records");
  bool pos = false, neg = false;
  for (const auto& r : records) (r.label ? pos : neg) = true;
  if (!(pos && neg)) throw ValidationError("stage2_train: records contain a single class; classifier undefined");

  std::map<std::string, const Task*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;
  std::vector<std::string> task_order;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!by_id.count(r.task_id)) throw LookupError("stage2_train: unknown task '" + r.task_id + "'");
    if (seen.insert(r.task_id).second) task_order.push_back(r.task_id);
  }
  std::map<std::string, ScoringInput> inputs;
  for (const auto& id : task_order) inputs.emplace(id, scoring_input(*by_id[id], env.roles, *env.space));
  std::map<int, Mat> adj;
  for (const auto& r : records)
    if (!adj.count(r.graph_id)) adj.emplace(r.graph_id, normalized_adjacency(env.pool->by_id(r.graph_id)));

  Rng split_rng(mix_seed(cfg.seed, 0x5917));
  std::vector<std::string> shuffled = task_order;
  split_rng.shuffle(shuffled);
  const auto cut = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(shuffled.size())));
  const std::set<std::string> train_ids(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<LabelledExample> train, val;
  for (const auto& r : records) {
    LabelledExample ex{&inputs.at(r.task_id), &adj.at(r.graph_id), static_cast<double>(r.label)};
    (train_ids.count(r.task_id) ? train : val).push_back(ex);
  }
  if (val.empty()) val = train;
  if (train.empty()) train = val;

  Stage2Result best;
  best.best_val_bce = std::numeric_limits<double>::infinity();
  best.train_records = train.size();
  best.val_records = val.size();
  for (std::size_t di = 0; di < cfg.dropout_grid.size(); ++di) {
    const double dropout = cfg.dropout_grid[di];
    Rng init_rng(mix_seed(cfg.seed, 0x5C0));
    GraphScorer scorer = make_scorer(env.space->embed_dim(), init_rng, dropout);
    AdamState adam;
    adam.lr = cfg.lr;
    adam.weight_decay = cfg.weight_decay;
    GraphScorer keep = scorer;
    AdamState keep_adam = adam;
    double keep_bce = mean_bce(scorer, val);
    std::size_t keep_epoch = 0, since = 0;
    if (log) *log << nlohmann::json{{"stage", 2}, {"dropout", dropout}, {"epoch", 0}, {"val_bce", keep_bce}}.dump() << '\n';
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      Rng ep_rng(mix_seed(cfg.seed, 0xE90C, di, epoch));
      ep_rng.shuffle(order);
      double train_total = 0.0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        GraphScorer grads = zeros_like(scorer);
        for (std::size_t k = start; k < end; ++k) {
          const LabelledExample& ex = train[order[k]];
          Rng drop_rng(mix_seed(cfg.seed, 0xD0, di, epoch, k));
          ScorerCache cache;
          const double s = score_graph(scorer, *ex.input, *ex.a_hat, true, &drop_rng, &cache);
          train_total += bce_with_logit(s, ex.label);
          score_backward_add(scorer, cache, sigmoid(s) - ex.label, 1.0 / static_cast<double>(end - start), grads);
        }
        adam_step(adam, views_of(scorer), views_of(grads));
      }
      const double vb = mean_bce(scorer, val);
      EpochRecord er{dropout, epoch, train_total / static_cast<double>(order.size()), vb};
      best.curves.push_back(er);
      if (log) {
        nlohmann::json j{{"stage", 2}, {"dropout", dropout}, {"epoch", epoch}, {"train_bce", er.train_bce}, {"val_bce", vb}};
        if (cfg.log_timing) j["wall_clock_ms"] = elapsed_ms(t0);
        *log << j.dump() << '\n';
      }
      if (!std::isfinite(vb)) throw NumericError("stage2: non-finite validation loss at epoch " + std::to_string(epoch));
      if (vb < keep_bce) {
        keep_bce = vb;
        keep = scorer;
        keep_adam = adam;
        keep_epoch = epoch;
        since = 0;
      } else if (++since >= cfg.patience) {
        break;
      }
    }
    if (keep_bce < best.best_val_bce) {
      best.best_val_bce = keep_bce;
      best.scorer = std::move(keep);
      best.adam = std::move(keep_adam);
      best.chosen_dropout = dropout;
      best.best_epoch = keep_epoch;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Evaluation

inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> m{"ours", "random-graph", "full-graph", "no-llm-selection"};
  return m;
}

struct EvalConfig {
  std::vector<std::string> methods = all_methods();
  std::size_t repeats = 5;
  std::size_t random_graphs = 3;
  std::size_t proposers = 2;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct MethodReport {
  std::string method;
  std::size_t samples = 0;
  double mean_reward = 0.0;
  double reward_ci = 0.0;  // 95% half-width
  double accuracy = 0.0;
  double accuracy_ci = 0.0;
  double mean_cost = 0.0;
  double cost_ci = 0.0;
};

struct EvalReport {
  std::vector<MethodReport> methods;
  std::vector<std::string> task_ids;
  std::vector<int> selected_graphs;  // per held-out task, from the scorer

  const MethodReport& at(const std::string& name) const {
    for (const auto& m : methods)
      if (m.method == name) return m;
    throw LookupError("eval: method '" + name + "' not evaluated");
  }
};

inline std::pair<double, double> mean_ci(const std::vector<double>& x) {
  if (x.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (x.size() < 2) return {mean, 0.0};
  double sq = 0.0;
  for (double v : x) sq += (v - mean) * (v - mean);
  return {mean, 1.96 * std::sqrt(sq / (n - 1.0)) / std::sqrt(n)};
}

// Every method sees the same tasks and the same execution seeds.
inline EvalReport evaluate_methods(const std::vector<Task>& tasks, const SelectorPolicy& policy,
                                   const GraphScorer& scorer, const Environment& env, const EvalConfig& cfg) {
  env.check();
  if (cfg.methods.empty()) throw ValidationError("eval: no methods requested, nothing to evaluate");
  for (const auto& m : cfg.methods)
    if (std::find(all_methods().begin(), all_methods().end(), m) == all_methods().end())
      throw ValidationError("eval: unknown method '" + m + "'");
  if (tasks.empty()) throw ValidationError("eval: no tasks");
  if (cfg.repeats == 0) throw ValidationError("eval: repeats must be >= 1");
  const auto roles = env.role_profiles();
  const std::size_t threads = env.backend->concurrent_safe() ? cfg.threads : 1;
  const std::size_t n = env.roles.size();
  const DagTopology full = complete_dag(n, -1);
  const std::size_t strongest = env.space->strongest_model();

  EvalReport report;
  std::vector<int> picks(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    picks[i] = select_topology(scorer, tasks[i], env.roles, *env.space, *env.pool).graph_id;
  });
  for (const auto& t : tasks) report.task_ids.push_back(t.task_id);
  report.selected_graphs = picks;

  for (const auto& method : cfg.methods) {
    std::vector<std::vector<double>> rew(tasks.size()), acc(tasks.size()), cost(tasks.size());
    parallel_for(tasks.size(), threads, [&](std::size_t i) {
      const Task& task = tasks[i];
      const std::uint64_t key = fnv1a64(task.task_id);
      std::vector<const DagTopology*> graphs;
      if (method == "ours" || method == "no-llm-selection") {
        graphs.push_back(&env.pool->by_id(picks[i]));
      } else if (method == "full-graph") {
        graphs.push_back(&full);
      } else {
        Rng rng(mix_seed(cfg.seed, 0xA9, key));
        for (std::size_t k = 0; k < cfg.random_graphs; ++k)
          graphs.push_back(&env.pool->graphs[static_cast<std::size_t>(rng.below(env.pool->size()))]);
      }
      for (const DagTopology* g : graphs) {
        const SystemConfiguration c =
            method == "no-llm-selection"
                ? fixed_configuration(strongest, *env.space, task, env.roles, cfg.proposers, *g)
                : greedy_configuration(policy, *env.space, task, env.roles, cfg.proposers, *g);
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
          const ExecutionTrace tr =
              execute_system(c, *env.space, *env.backend, env.world, mix_seed(cfg.seed, 0xE7, key, r));
          rew[i].push_back(trace_rewards(tr, roles, env.rewards).final_reward);
          acc[i].push_back(tr.final_correct == 1 ? 1.0 : 0.0);
          cost[i].push_back(tr.total_cost);
        }
      }
    });
    std::vector<double> r_all, a_all, c_all;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      r_all.insert(r_all.end(), rew[i].begin(), rew[i].end());
      a_all.insert(a_all.end(), acc[i].begin(), acc[i].end());
      c_all.insert(c_all.end(), cost[i].begin(), cost[i].end());
    }
    MethodReport m;
    m.method = method;
    m.samples = r_all.size();
    std::tie(m.mean_reward, m.reward_ci) = mean_ci(r_all);
    std::tie(m.accuracy, m.accuracy_ci) = mean_ci(a_all);
    std::tie(m.mean_cost, m.cost_ci) = mean_ci(c_all);
    report.methods.push_back(m);
  }
  return report;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["methods"] = nlohmann::json::array();
  for (const auto& m : r.methods)
    j["methods"].push_back({{"method", m.method},
                            {"samples", m.samples},
                            {"mean_reward", m.mean_reward},
                            {"reward_ci", m.reward_ci},
                            {"accuracy", m.accuracy},
                            {"accuracy_ci", m.accuracy_ci},
                            {"mean_cost", m.mean_cost},
                            {"cost_ci", m.cost_ci}});
  j["selected_graphs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < r.task_ids.size(); ++i)
    j["selected_graphs"].push_back({{"task_id", r.task_ids[i]}, {"graph_id", r.selected_graphs[i]}});
  return j;
}

inline void write_eval_csv(std::ostream& os, const EvalReport& r) {
  os << "method,samples,mean_reward,reward_ci,accuracy,accuracy_ci,mean_cost,cost_ci\r\n";
  for (const auto& m : r.methods)
    os << m.method << ',' << m.samples << ',' << m.mean_reward << ',' << m.reward_ci << ',' << m.accuracy << ','
       << m.accuracy_ci << ',' << m.mean_cost << ',' << m.cost_ci << "\r\n";
}

}  // namespace mastune
