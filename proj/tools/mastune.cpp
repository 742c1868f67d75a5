// mastune: train, evaluate and inspect hierarchical multi-agent configurations
// in the simulated world, and run the theory harness.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mastune/commands.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "experiment config (JSON)")->required();
  sub->add_option("--seed", f.seed, "override the config seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--threads", f.threads, "worker threads (1 = serial)");
}

mastune::ExperimentConfig load(const CommonFlags& f) {
  mastune::ExperimentConfig cfg = mastune::load_experiment(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (f.threads) {
    if (*f.threads == 0) throw mastune::ValidationError("--threads must be >= 1");
    cfg.threads = *f.threads;
  }
  cfg.propagate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical multi-agent configuration tuner"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, inspect_f, theory_f, pool_f, world_f;
  auto* train = app.add_subcommand("train", "Stage 1 selector training, then Stage 2 graph classifier");
  add_common(train, train_f);

  auto* eval = app.add_subcommand("eval", "evaluate methods on the held-out split");
  add_common(eval, eval_f);
  std::string eval_ckpt;
  std::vector<std::string> methods = mastune::all_methods();
  eval->add_option("--checkpoints", eval_ckpt, "directory holding policy.json and scorer.json")->required();
  eval->add_option("--methods", methods, "subset of: ours random-graph full-graph no-llm-selection");

  auto* inspect = app.add_subcommand("inspect", "top-k selected graphs, Jaccard matrix, degree profiles");
  add_common(inspect, inspect_f);
  std::string inspect_ckpt;
  std::size_t top_k = 5;
  inspect->add_option("--checkpoints", inspect_ckpt, "directory holding policy.json and scorer.json")->required();
  inspect->add_option("--top-k", top_k, "number of graphs to report");

  auto* theory = app.add_subcommand("theory", "alpha sweep, edge-error Monte Carlo, best-arm check, strawman");
  add_common(theory, theory_f);

  auto* gen_pool = app.add_subcommand("gen-pool", "generate the candidate DAG pool");
  add_common(gen_pool, pool_f);

  auto* gen_world = app.add_subcommand("gen-world", "generate tasks and the (planted) world parameters");
  add_common(gen_world, world_f);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return mastune::cmd_train(load(train_f), std::cout);
    if (*eval) {
      if (eval->count("--methods") && methods.size() == 1 && methods.front().empty()) methods.clear();
      return mastune::cmd_eval(load(eval_f), eval_ckpt, methods, std::cout);
    }
    if (*inspect) return mastune::cmd_inspect(load(inspect_f), inspect_ckpt, top_k, std::cout);
    if (*theory) return mastune::cmd_theory(load(theory_f), std::cout);
    if (*gen_pool) return mastune::cmd_gen_pool(load(pool_f), std::cout);
    if (*gen_world) return mastune::cmd_gen_world(load(world_f), std::cout);
  } catch (const mastune::MissingConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
