#pragma once

// Experiment configuration and the command implementations behind the CLI.
// Each command reads one JSON config, derives every random stream from its
// seed, and writes artifacts into the output directory.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mastune/classifier.hpp"
#include "mastune/error.hpp"
#include "mastune/graphs.hpp"
#include "mastune/policy.hpp"
#include "mastune/rewards.hpp"
#include "mastune/searchspace.hpp"
#include "mastune/theory.hpp"
#include "mastune/trainer.hpp"
#include "mastune/world.hpp"
#include "mastune/world_http.hpp"

namespace mastune {

namespace fs = std::filesystem;

struct PlantedConfig {
  std::vector<Edge> edges;
  PlantedWorldOptions options;
};

struct TheoryConfig {
  std::size_t trials = 100000;
  std::size_t edge_count = 100;
  std::vector<std::array<double, 3>> edge_setups{{0.5, 0.8, 0.1}, {0.5, 0.6, 0.3}};  // (p, q, rho)
  double bandit_bound = 1.0;
  double bandit_gamma = 0.2;
  std::size_t bandit_arms = 200;
  double bandit_delta = 0.05;
  std::size_t bandit_trials = 1000;
  double alpha_step = 0.05;
  bool strawman = true;
};

struct ExperimentConfig {
  fs::path config_path;
  std::uint64_t seed = 0;
  fs::path search_space;
  std::vector<std::string> roles;
  TaskFamily tasks;
  WorldParams world;
  std::size_t pool_size = 20;
  double density_lo = 0.3;
  double density_hi = 0.75;
  std::optional<PlantedConfig> planted;
  Stage1Config stage1;
  Stage2Config stage2;
  RewardParams rewards;
  double temperature = 1.0;
  double entropy_weight = 0.01;
  std::size_t proposers = 2;
  double train_fraction = 0.8;
  EvalConfig eval;
  TheoryConfig theory;
  fs::path output_dir = "out";
  std::optional<HttpBackendConfig> http;
  std::size_t threads = 1;
  bool log_timing = false;

  // Pushes the shared knobs (seed, W, threads) into the per-stage configs.
  void propagate() {
    stage1.seed = mix_seed(seed, 1);
    stage2.seed = mix_seed(seed, 2);
    eval.seed = mix_seed(seed, 3);
    stage1.proposers = stage2.proposers = eval.proposers = proposers;
    stage1.threads = stage2.threads = eval.threads = threads;
    stage1.log_timing = stage2.log_timing = log_timing;
    tasks.seed = mix_seed(seed, 4);
  }
};

inline fs::path resolve_relative(const fs::path& base_file, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : base_file.parent_path() / q;
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j, const fs::path& config_path) {
  ExperimentConfig c;
  c.config_path = config_path;
  try {
    read_opt(j, "seed", c.seed);
    c.search_space = resolve_relative(config_path, j.value("search_space", std::string("data/search_space.json")));
    c.roles = j.at("roles").get<std::vector<std::string>>();
    if (j.contains("tasks")) {
      const auto& t = j["tasks"];
      read_opt(t, "count", c.tasks.count);
      read_opt(t, "num_domains", c.tasks.num_domains);
      read_opt(t, "difficulty_lo", c.tasks.difficulty_lo);
      read_opt(t, "difficulty_hi", c.tasks.difficulty_hi);
    }
    if (j.contains("world")) c.world = world_params_from_json(j["world"]);
    if (j.contains("pool")) {
      const auto& p = j["pool"];
      read_opt(p, "size", c.pool_size);
      read_opt(p, "density_lo", c.density_lo);
      read_opt(p, "density_hi", c.density_hi);
    }
    if (j.contains("planted") && !j["planted"].is_null()) {
      const auto& p = j["planted"];
      PlantedConfig pc;
      for (const auto& e : p.at("edges")) pc.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
      read_opt(p, "gamma", pc.options.gamma);
      read_opt(p, "samples", pc.options.samples);
      read_opt(p, "initial_bonus", pc.options.initial_bonus);
      read_opt(p, "penalty_ratio", pc.options.penalty_ratio);
      read_opt(p, "growth", pc.options.growth);
      read_opt(p, "max_retries", pc.options.max_retries);
      c.planted = pc;
    }
    if (j.contains("stage1")) {
      const auto& s = j["stage1"];
      read_opt(s, "iterations", c.stage1.iterations);
      read_opt(s, "batch_size", c.stage1.batch_size);
      read_opt(s, "lr", c.stage1.lr);
      read_opt(s, "weight_decay", c.stage1.weight_decay);
    }
    if (j.contains("stage2")) {
      const auto& s = j["stage2"];
      read_opt(s, "samples_per_query", c.stage2.samples_per_query);
      read_opt(s, "positives_per_query", c.stage2.positives_per_query);
      read_opt(s, "executions_per_graph", c.stage2.executions_per_graph);
      read_opt(s, "epochs", c.stage2.epochs);
      read_opt(s, "patience", c.stage2.patience);
      read_opt(s, "dropout_grid", c.stage2.dropout_grid);
      read_opt(s, "train_fraction", c.stage2.train_fraction);
      read_opt(s, "batch_size", c.stage2.batch_size);
      read_opt(s, "lr", c.stage2.lr);
      read_opt(s, "weight_decay", c.stage2.weight_decay);
    }
    if (j.contains("rewards")) {
      read_opt(j["rewards"], "lambda_cost", c.rewards.lambda_cost);
      read_opt(j["rewards"], "alpha", c.rewards.alpha);
    }
    if (j.contains("policy")) {
      read_opt(j["policy"], "temperature", c.temperature);
      read_opt(j["policy"], "entropy_weight", c.entropy_weight);
      read_opt(j["policy"], "proposers", c.proposers);
    }
    read_opt(j, "train_fraction", c.train_fraction);
    if (j.contains("eval")) {
      read_opt(j["eval"], "methods", c.eval.methods);
      read_opt(j["eval"], "repeats", c.eval.repeats);
      read_opt(j["eval"], "random_graphs", c.eval.random_graphs);
    }
    if (j.contains("theory")) {
      const auto& t = j["theory"];
      read_opt(t, "trials", c.theory.trials);
      read_opt(t, "edge_count", c.theory.edge_count);
      if (t.contains("edge_setups")) c.theory.edge_setups = t["edge_setups"].get<std::vector<std::array<double, 3>>>();
      read_opt(t, "bandit_bound", c.theory.bandit_bound);
      read_opt(t, "bandit_gamma", c.theory.bandit_gamma);
      read_opt(t, "bandit_arms", c.theory.bandit_arms);
      read_opt(t, "bandit_delta", c.theory.bandit_delta);
      read_opt(t, "bandit_trials", c.theory.bandit_trials);
      read_opt(t, "alpha_step", c.theory.alpha_step);
      read_opt(t, "strawman", c.theory.strawman);
    }
    if (j.contains("output_dir")) c.output_dir = resolve_relative(config_path, j["output_dir"].get<std::string>());
    if (j.contains("backend") && j["backend"].value("kind", std::string("simulated")) == "http")
      c.http = http_config_from_json(j["backend"]);
    read_opt(j, "threads", c.threads);
    read_opt(j, "log_timing", c.log_timing);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError("config '" + config_path.string() + "': " + ex.what());
  }
  if (c.roles.empty()) throw ValidationError("config: 'roles' must list at least one role");
  if (c.theory.trials == 0) throw ValidationError("config: theory.trials must be >= 1");
  c.propagate();
  return c;
}

// Exit code 2 in the CLI.
class MissingConfigError : public Error {
 public:
  using Error::Error;
};

inline ExperimentConfig load_experiment(const fs::path& path) {
  if (!fs::exists(path)) throw MissingConfigError("config file not found: " + path.string());
  return experiment_from_json(read_json_file(path), path);
}

// ---------------------------------------------------------------------------
// Experiment assembly

struct Experiment {
  ExperimentConfig cfg;
  SearchSpace space;
  std::vector<std::size_t> roles;
  std::vector<Task> tasks;
  TaskSplit split;
  GraphPool pool;
  std::optional<PlantedWorld> planted;
  std::unique_ptr<AgentBackend> backend;

  Environment environment() const {
    Environment env;
    env.space = &space;
    env.roles = roles;
    env.pool = &pool;
    env.world = planted ? planted->params : cfg.world;
    env.backend = backend.get();
    env.rewards = cfg.rewards;
    return env;
  }
};

inline std::unique_ptr<Experiment> build_experiment(const ExperimentConfig& cfg) {
  auto ex = std::make_unique<Experiment>();
  ex->cfg = cfg;
  ex->space = load_search_space(cfg.search_space);
  for (const auto& r : cfg.roles) ex->roles.push_back(ex->space.role_index(r));
  ex->tasks = generate_tasks(cfg.tasks);
  ex->split = split_tasks(ex->tasks, cfg.train_fraction, mix_seed(cfg.seed, 5));
  if (cfg.planted) {
    const DagTopology star = DagTopology::from_edges(0, cfg.roles.size(), cfg.planted->edges);
    PlantedWorldOptions opt = cfg.planted->options;
    opt.pool_size = cfg.pool_size;
    opt.density_lo = cfg.density_lo;
    opt.density_hi = cfg.density_hi;
    opt.proposers = cfg.proposers;
    ex->planted = build_planted_world(ex->space, ex->roles, ex->split.train, star, cfg.world, cfg.rewards, opt,
                                      mix_seed(cfg.seed, 6));
    ex->pool = ex->planted->pool;
  } else {
    ex->pool = generate_pool(cfg.roles.size(), cfg.pool_size, cfg.density_lo, cfg.density_hi, mix_seed(cfg.seed, 7));
  }
  if (cfg.http) ex->backend = std::make_unique<HttpBackend>(*cfg.http);
  else ex->backend = std::make_unique<SimulatedBackend>(ex->environment().world);
  return ex;
}

// ---------------------------------------------------------------------------
// Artifact helpers

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json_or_throw(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw ValidationError(std::string("missing ") + what + " '" + path.string() + "'");
  return read_json_file(path);
}

struct TrainedModels {
  SelectorPolicy policy;
  GraphScorer scorer;
  AdamState policy_adam;
  Stage2Result stage2;
  std::vector<Stage1Record> stage1_log;
  std::vector<GraphLabelRecord> records;
};

// Algorithm end to end: Stage 1 on the training split, Stage 2 generation
// and classifier fitting with the selector frozen.
inline TrainedModels train_models(const Experiment& ex, std::ostream* log = nullptr) {
  const Environment env = ex.environment();
  TrainedModels tm;
  Rng init(mix_seed(ex.cfg.seed, 0x1217));
  tm.policy = make_selector(ex.space.embed_dim(), init, ex.cfg.temperature, ex.cfg.entropy_weight);
  tm.stage1_log = stage1_train(ex.split.train, env, tm.policy, tm.policy_adam, ex.cfg.stage1, log).log;
  tm.records = stage2_generate(ex.split.train, tm.policy, env, ex.cfg.stage2);
  tm.stage2 = stage2_train(tm.records, ex.split.train, env, ex.cfg.stage2, log);
  tm.scorer = tm.stage2.scorer;
  return tm;
}

// Per-edge baseline on the planted graph, given the same number of system
// executions that Stage 2 spent labelling.
inline StrawmanResult run_strawman(const Experiment& ex, const TrainedModels& tm) {
  if (!ex.planted) throw ValidationError("strawman: needs a planted world");
  StrawmanConfig sc;
  sc.proposers = ex.cfg.proposers;
  sc.seed = mix_seed(ex.cfg.seed, 0x57);
  const std::size_t budget =
      ex.split.train.size() * ex.cfg.stage2.samples_per_query * ex.cfg.stage2.executions_per_graph;
  sc.iterations = std::max<std::size_t>(1, budget / sc.batch_size);
  return per_edge_strawman_train(ex.split.train, tm.policy, ex.environment(), ex.pool.by_id(ex.planted->star_id), sc);
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
  const auto ex = build_experiment(cfg);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  std::ostringstream log;
  TrainedModels tm = train_models(*ex, &log);
  write_text(dir / "train_log.jsonl", log.str());
  write_json(dir / "policy.json", selector_to_json(tm.policy, cfg.proposers, ex->space, &tm.policy_adam));
  write_json(dir / "scorer.json", scorer_to_json(tm.scorer, ex->space, ex->pool, &tm.stage2.adam));
  write_json(dir / "pool.json", pool_to_json(ex->pool));
  write_json(dir / "world.json", world_params_to_json(ex->environment().world));
  {
    std::ostringstream csv;
    write_records_csv(csv, tm.records);
    write_text(dir / "stage2_records.csv", csv.str());
  }
  std::size_t positives = 0;
  for (const auto& r : tm.records) positives += r.label;
  nlohmann::json summary{{"schema_version", 1},
                         {"train_tasks", ex->split.train.size()},
                         {"heldout_tasks", ex->split.heldout.size()},
                         {"stage1_iterations", tm.stage1_log.size()},
                         {"stage1_final_reward", tm.stage1_log.empty() ? 0.0 : tm.stage1_log.back().mean_final_reward},
                         {"stage2_records", tm.records.size()},
                         {"stage2_positives", positives},
                         {"chosen_dropout", tm.stage2.chosen_dropout},
                         {"best_val_bce", tm.stage2.best_val_bce},
                         {"best_epoch", tm.stage2.best_epoch}};
  if (ex->planted) {
    summary["planted_graph_id"] = ex->planted->star_id;
    summary["planted_margin_lower"] = ex->planted->margin_lower;
  }
  write_json(dir / "train_summary.json", summary);

  out << "stage  metric                 value\n";
  if (!tm.stage1_log.empty()) {
    out << "1      mean_final_reward[0]   " << fixed(tm.stage1_log.front().mean_final_reward) << "\n";
    out << "1      mean_final_reward[T]   " << fixed(tm.stage1_log.back().mean_final_reward) << "\n";
  }
  out << "2      records/positives      " << tm.records.size() << "/" << positives << "\n";
  out << "2      chosen_dropout         " << tm.stage2.chosen_dropout << "\n";
  out << "2      best_val_bce           " << fixed(tm.stage2.best_val_bce) << "\n";
  out << "artifacts written to " << dir.string() << "\n";
  return 0;
}

struct LoadedModels {
  SelectorPolicy policy;
  GraphScorer scorer;
};

inline LoadedModels load_models(const Experiment& ex, const fs::path& dir) {
  LoadedModels m;
  const LoadedSelector sel = selector_from_json(read_json_or_throw(dir / "policy.json", "policy checkpoint"), ex.space);
  m.policy = sel.policy;
  m.scorer = scorer_from_json(read_json_or_throw(dir / "scorer.json", "scorer checkpoint"), ex.space, ex.pool);
  return m;
}

inline int cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoints, const std::vector<std::string>& methods,
                    std::ostream& out) {
  if (methods.empty()) throw ValidationError("eval: no methods requested, nothing to evaluate");
  const auto ex = build_experiment(cfg);
  const LoadedModels m = load_models(*ex, checkpoints);
  EvalConfig ec = cfg.eval;
  ec.methods = methods;
  const EvalReport rep = evaluate_methods(ex->split.heldout, m.policy, m.scorer, ex->environment(), ec);
  std::ostringstream csv;
  write_eval_csv(csv, rep);
  write_text(cfg.output_dir / "eval.csv", csv.str());
  write_json(cfg.output_dir / "eval.json", eval_report_to_json(rep));
  out << "method             mean_reward  ci       accuracy  mean_cost\n";
  for (const auto& r : rep.methods)
    out << std::left << std::setw(19) << r.method << fixed(r.mean_reward) << "     " << fixed(r.reward_ci) << "   "
        << fixed(r.accuracy) << "    " << fixed(r.mean_cost, 6) << "\n";
  return 0;
}

struct TopGraph {
  int graph_id = 0;
  std::size_t count = 0;
};

// Most frequently selected graphs over the given tasks; ties to lower graph_id.
inline std::vector<TopGraph> top_selected(const GraphScorer& scorer, const std::vector<Task>& tasks,
                                          const std::vector<std::size_t>& roles, const SearchSpace& space,
                                          const GraphPool& pool, std::size_t k) {
  std::map<int, std::size_t> counts;
  for (const auto& g : pool.graphs) counts[g.graph_id()] = 0;
  for (const auto& t : tasks) ++counts[select_topology(scorer, t, roles, space, pool).graph_id];
  std::vector<TopGraph> all;
  for (auto [id, n] : counts) all.push_back({id, n});
  std::stable_sort(all.begin(), all.end(), [](const TopGraph& a, const TopGraph& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.graph_id < b.graph_id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

inline int cmd_inspect(const ExperimentConfig& cfg, const fs::path& checkpoints, std::size_t top_k, std::ostream& out) {
  if (top_k == 0) throw ValidationError("inspect: top_k must be >= 1");
  const auto ex = build_experiment(cfg);
  const LoadedModels m = load_models(*ex, checkpoints);
  const std::vector<TopGraph> top = top_selected(m.scorer, ex->tasks, ex->roles, ex->space, ex->pool, top_k);
  std::vector<DagTopology> graphs;
  std::ostringstream topcsv, degcsv;
  topcsv << "rank,graph_id,selected,density,edge_count\r\n";
  degcsv << "graph_id,node,role_id,in_degree,out_degree\r\n";
  std::vector<std::string> labels;
  for (std::size_t r : ex->roles) labels.push_back(ex->space.roles()[r].role_id);
  for (std::size_t i = 0; i < top.size(); ++i) {
    const DagTopology& g = ex->pool.by_id(top[i].graph_id);
    graphs.push_back(g);
    topcsv << i + 1 << ',' << g.graph_id() << ',' << top[i].count << ',' << density(g) << ',' << g.edge_count()
           << "\r\n";
    for (std::size_t v = 0; v < g.num_nodes(); ++v)
      degcsv << g.graph_id() << ',' << v << ',' << labels[v] << ',' << g.in_degree(v) << ',' << g.out_degree(v)
             << "\r\n";
    std::ostringstream dot;
    write_dot(dot, g, labels);
    write_text(cfg.output_dir / ("graph_" + std::to_string(g.graph_id()) + ".dot"), dot.str());
  }
  std::ostringstream jac;
  write_jaccard_csv(jac, graphs);
  write_text(cfg.output_dir / "topk.csv", topcsv.str());
  write_text(cfg.output_dir / "degrees.csv", degcsv.str());
  write_text(cfg.output_dir / "topk_jaccard.csv", jac.str());
  out << "rank  graph_id  selected  density\n";
  for (std::size_t i = 0; i < top.size(); ++i)
    out << i + 1 << "     " << top[i].graph_id << "         " << top[i].count << "         "
        << fixed(density(graphs[i]), 3) << "\n";
  return 0;
}

inline int cmd_theory(const ExperimentConfig& cfg, std::ostream& out) {
  const TheoryConfig& t = cfg.theory;
  if (t.trials == 0) throw ValidationError("theory: trials must be >= 1");
  nlohmann::json report;
  report["schema_version"] = 1;

  std::ostringstream edge_csv;
  edge_csv << "p,q,rho,predicted,empirical,lower_bound,tolerance\r\n";
  report["edge_error"] = nlohmann::json::array();
  for (std::size_t i = 0; i < t.edge_setups.size(); ++i) {
    const auto [p, q, rho] = t.edge_setups[i];
    EdgeErrorSetup s;
    s.p = p;
    s.q = q;
    s.rho = rho;
    s.edge_count = t.edge_count;
    s.trials = t.trials;
    s.seed = mix_seed(cfg.seed, 0xEE, i);
    s.threads = cfg.threads;
    const EdgeErrorResult r = edge_error_mc(s);
    edge_csv << p << ',' << q << ',' << rho << ',' << r.predicted << ',' << r.empirical << ',' << r.lower_bound << ','
             << r.tolerance << "\r\n";
    report["edge_error"].push_back({{"p", p}, {"q", q}, {"rho", rho}, {"predicted", r.predicted},
                                    {"empirical", r.empirical}, {"lower_bound", r.lower_bound}});
    out << "edge error p=" << p << " q=" << q << " rho=" << rho << ": predicted " << fixed(r.predicted)
        << ", empirical " << fixed(r.empirical) << "\n";
  }

  const std::size_t nk = hoeffding_samples(t.bandit_bound, t.bandit_gamma, t.bandit_arms, t.bandit_delta);
  std::ostringstream hoeff_csv;
  hoeff_csv << "samples_per_arm,success_rate,target\r\n";
  report["hoeffding"] = {{"B", t.bandit_bound}, {"gamma", t.bandit_gamma}, {"K", t.bandit_arms},
                         {"delta", t.bandit_delta}, {"N_k", nk}, {"curve", nlohmann::json::array()}};
  for (std::size_t div : {8, 4, 2, 1}) {
    const std::size_t n = std::max<std::size_t>(1, nk / div);
    const BanditSetup b = margin_bandit(t.bandit_arms, t.bandit_bound, t.bandit_gamma, n, mix_seed(cfg.seed, 0xBA));
    const double rate = best_arm_success_rate(b, t.bandit_trials, mix_seed(cfg.seed, 0xBB, div), cfg.threads);
    hoeff_csv << n << ',' << rate << ',' << 1.0 - t.bandit_delta << "\r\n";
    report["hoeffding"]["curve"].push_back({{"samples_per_arm", n}, {"success_rate", rate}});
    out << "best-arm N_k=" << n << ": success " << fixed(rate) << "\n";
  }

  const SearchSpace space = load_search_space(cfg.search_space);
  const std::vector<Task> tasks = generate_tasks(cfg.tasks);
  BiasScenario sc;
  sc.role_index = space.role_index(cfg.roles.front());
  sc.chosen_model = space.strongest_model() == 0 ? 1 : 0;
  sc.seed = mix_seed(cfg.seed, 0xB5);
  sc.lr = cfg.stage1.lr;
  const AlphaSweep sweep = alpha_sweep(space, tasks.front(), sc, t.alpha_step);
  std::ostringstream alpha_csv;
  alpha_csv << "alpha,r_eff,pi_before,pi_after\r\n";
  for (const auto& s : sweep.steps)
    alpha_csv << s.alpha << ',' << s.r_eff << ',' << std::setprecision(12) << s.pi_before << ',' << s.pi_after
              << std::setprecision(6) << "\r\n";
  report["alpha_sweep"] = {{"predicted_threshold", sweep.predicted_threshold}, {"first_decrease", sweep.first_decrease}};
  out << "alpha threshold predicted " << fixed(sweep.predicted_threshold, 2) << ", first decrease at "
      << fixed(sweep.first_decrease, 2) << "\n";

  if (t.strawman && cfg.planted) {
    const auto ex = build_experiment(cfg);
    const TrainedModels tm = train_models(*ex);
    const StrawmanResult sr = run_strawman(*ex, tm);
    const std::vector<TopGraph> top = top_selected(tm.scorer, ex->split.heldout, ex->roles, ex->space, ex->pool, 1);
    report["strawman"] = strawman_to_json(sr);
    report["holistic"] = {{"planted_graph_id", ex->planted->star_id},
                          {"top1_graph_id", top.front().graph_id},
                          {"recovered", top.front().graph_id == ex->planted->star_id}};
    out << "strawman exact recovery " << (sr.exact_recovery ? "yes" : "no") << ", holistic recovery "
        << (top.front().graph_id == ex->planted->star_id ? "yes" : "no") << "\n";
  }

  write_json(cfg.output_dir / "theory.json", report);
  write_text(cfg.output_dir / "edge_error.csv", edge_csv.str());
  write_text(cfg.output_dir / "hoeffding.csv", hoeff_csv.str());
  write_text(cfg.output_dir / "alpha_sweep.csv", alpha_csv.str());
  return 0;
}

inline int cmd_gen_pool(const ExperimentConfig& cfg, std::ostream& out) {
  const GraphPool pool =
      generate_pool(cfg.roles.size(), cfg.pool_size, cfg.density_lo, cfg.density_hi, mix_seed(cfg.seed, 7));
  write_json(cfg.output_dir / "pool.json", pool_to_json(pool));
  std::ostringstream csv, jac;
  write_pool_csv(csv, pool);
  write_jaccard_csv(jac, pool.graphs);
  write_text(cfg.output_dir / "pool.csv", csv.str());
  write_text(cfg.output_dir / "pool_jaccard.csv", jac.str());
  double mean = 0.0;
  for (const auto& g : pool.graphs) mean += density(g);
  out << "pool: K=" << pool.size() << " N=" << pool.num_nodes() << " mean density "
      << fixed(mean / static_cast<double>(pool.size()), 3) << " fingerprint " << pool.fingerprint() << "\n";
  return 0;
}

inline int cmd_gen_world(const ExperimentConfig& cfg, std::ostream& out) {
  const auto ex = build_experiment(cfg);
  nlohmann::json w = world_params_to_json(ex->environment().world);
  nlohmann::json doc{{"schema_version", 1}, {"world", w}, {"pool_fingerprint", ex->pool.fingerprint()}};
  if (ex->planted) {
    doc["planted_graph_id"] = ex->planted->star_id;
    doc["margin_lower"] = ex->planted->margin_lower;
    doc["margin_mean"] = ex->planted->margin_mean;
    doc["mean_rewards"] = ex->planted->mean_rewards;
    doc["calibration_rounds"] = ex->planted->rounds;
  }
  write_json(cfg.output_dir / "world.json", doc);
  write_json(cfg.output_dir / "pool.json", pool_to_json(ex->pool));
  write_json(cfg.output_dir / "tasks.json", tasks_to_json(ex->tasks));
  out << "world: " << ex->tasks.size() << " tasks, pool K=" << ex->pool.size();
  if (ex->planted)
    out << ", planted graph " << ex->planted->star_id << " margin >= " << fixed(ex->planted->margin_lower);
  out << "\n";
  return 0;
}

}  // namespace mastune
