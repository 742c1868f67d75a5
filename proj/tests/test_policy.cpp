#include <gtest/gtest.h>

#include <cmath>

#include "mastune/policy.hpp"
#include "test_support.hpp"

using namespace mastune;
using mastune::testing::bundled_space;

namespace {

SelectorPolicy zero_policy(const SearchSpace& sp) {
  Rng rng(0);
  SelectorPolicy p = make_selector(sp.embed_dim(), rng);
  for (auto& l : p.scorer.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return p;
}

const char* kQuery = "Compute the derivative of x squared plus three x";

}  // namespace

TEST(Selection, ZeroScorerIsUniform) {
  const auto& sp = bundled_space();
  const SelectorPolicy p = zero_policy(sp);
  const Task t = mastune::testing::task("t");
  const Vec pi = selection_distribution(p, sp, t, 0, PositionType::proposer);
  ASSERT_EQ(pi.size(), 10);
  for (Eigen::Index i = 0; i < pi.size(); ++i) EXPECT_DOUBLE_EQ(pi[i], 0.1);
}

TEST(Selection, PositionInputChangesScores) {
  const auto& sp = bundled_space();
  SelectorPolicy p = zero_policy(sp);
  // Route only the synthesizer indicator into the output.
  p.scorer.layers[0].weight(0, 2 * sp.embed_dim() + 1) = 1.0;
  p.scorer.layers[0].weight(0, sp.embed_dim()) = 1.0;
  p.scorer.layers[1].weight(0, 0) = 1.0;
  p.scorer.layers[2].weight(0, 0) = 1.0;
  const Task t = mastune::testing::task("t");
  const Vec a = selection_scores(p, sp, context_embedding(t, sp.roles()[0], sp), PositionType::proposer);
  const Vec b = selection_scores(p, sp, context_embedding(t, sp.roles()[0], sp), PositionType::synthesizer);
  EXPECT_GT((a - b).norm(), 0.0);
}

TEST(Selection, SeededGolden) {
  const auto& sp = bundled_space();
  Rng rng(42);
  const SelectorPolicy p = make_selector(sp.embed_dim(), rng);
  const Task t = mastune::testing::task("t", {1, 0, 0}, 0.5, kQuery);
  const Vec pi = selection_distribution(p, sp, t, sp.role_index("math_solver"), PositionType::synthesizer);
  // oracle: tests/oracles/golden.py (MT19937-64 He init + numpy forward)
  const double golden[] = {0.09800936586340857, 0.09799438958835618, 0.09564380239235157, 0.09997433286086863,
                           0.09699495408827967, 0.10811313244500967, 0.10082367392859803, 0.10098975446896288,
                           0.10029775262226664, 0.1011588417418981};
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(pi[i], golden[i], 1e-13) << i;
}

TEST(Entropy, Examples) {
  Vec one = Vec::Zero(4);
  one[2] = 1.0;
  EXPECT_EQ(position_entropy(one), 0.0);
  EXPECT_NEAR(position_entropy(Vec::Constant(10, 0.1)), std::log(10.0), 1e-12);
  EXPECT_NEAR(std::log(10.0), 2.302585, 1e-6);
  Vec p(2);
  p << 0.7311, 0.2689;
  EXPECT_NEAR(position_entropy(p), 0.5822, 5e-5);
}

TEST(Entropy, PropertyBounds) {
  Rng rng(12);
  for (int t = 0; t < 1000; ++t) {
    const int n = 1 + static_cast<int>(rng.below(15));
    Vec l(n);
    for (int i = 0; i < n; ++i) l[i] = rng.uniform(-10, 10);
    const double h = position_entropy(softmax(l));
    ASSERT_GE(h, -1e-15);
    ASSERT_LE(h, std::log(static_cast<double>(n)) + 1e-12);
  }
}

TEST(Sampling, UniformPolicyGolden) {
  const auto& sp = bundled_space();
  const SelectorPolicy p = zero_policy(sp);
  const Task t = mastune::testing::task("t-0007");
  const std::vector<std::size_t> roles{0, 1, 2};
  auto [cfg, dec] = sample_configuration(p, sp, t, roles, 2, DagTopology::from_edges(0, 3, {{0, 2}}), 99);
  ASSERT_EQ(dec.size(), 9u);
  // oracle: tests/oracles/golden.py (seed mixing + MT19937-64 categorical draw)
  const std::size_t golden[] = {6, 9, 5, 6, 5, 2, 8, 5, 2};
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(dec[k].model_index, golden[k]) << k;
    EXPECT_EQ(dec[k].position_id, k);
    EXPECT_NEAR(dec[k].log_prob, std::log(0.1), 1e-12);
  }
  EXPECT_EQ(cfg.assignments[0].synthesizer_model, 5u);
  EXPECT_EQ(cfg.assignments[0].proposer_models, (std::vector<std::size_t>{6, 9}));
  auto [cfg2, dec2] = sample_configuration(p, sp, t, roles, 2, DagTopology::from_edges(0, 3, {{0, 2}}), 99);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(dec2[k].model_index, dec[k].model_index);
}

TEST(Sampling, ForcedSkipDeactivatesEverything) {
  const auto& sp = bundled_space();
  SelectorPolicy p = zero_policy(sp);
  const Eigen::Index skip_col = sp.embed_dim() + 0;
  // Give the skip token a huge logit via its embedding bucket sign.
  const Vec& e = sp.model_embedding(sp.skip_index());
  Eigen::Index bucket = 0;
  for (Eigen::Index i = 0; i < e.size(); ++i)
    if (std::abs(e[i]) > std::abs(e[bucket])) bucket = i;
  p.scorer.layers[0].weight(0, skip_col + bucket) = e[bucket] > 0 ? 1.0 : -1.0;
  p.scorer.layers[1].weight(0, 0) = 1.0;
  p.scorer.layers[2].weight(0, 0) = 1.0;
  p.temperature = 1e-3;
  const Task t = mastune::testing::task("t");
  auto [cfg, dec] = sample_configuration(p, sp, t, {0, 1, 2}, 2, DagTopology(0, 3), 5);
  for (const auto& a : cfg.assignments) EXPECT_FALSE(a.active);
  for (const auto& d : dec) EXPECT_EQ(d.model_index, sp.skip_index());
}

TEST(Sampling, ZeroProposersOnlySynthesizers) {
  const auto& sp = bundled_space();
  const SelectorPolicy p = zero_policy(sp);
  auto [cfg, dec] = sample_configuration(p, sp, mastune::testing::task("t"), {0, 1}, 0, DagTopology(0, 2), 1);
  ASSERT_EQ(dec.size(), 2u);
  for (const auto& d : dec) EXPECT_EQ(d.position_type, PositionType::synthesizer);
  EXPECT_THROW(sample_configuration(p, sp, mastune::testing::task("t"), {0, 1}, 0, DagTopology(0, 3), 1), ShapeError);
}

TEST(Reinforce, ZeroRewardNoEntropyZeroGradient) {
  const auto& sp = bundled_space();
  Rng rng(3);
  SelectorPolicy p = make_selector(sp.embed_dim(), rng, 1.0, 0.0);
  const Task t = mastune::testing::task("t");
  auto [cfg, dec] = sample_configuration(p, sp, t, {0, 1}, 1, DagTopology(0, 2), 3);
  PolicySample s{&t, {0, 1}, dec, {0.0, 0.0}};
  const PolicyGradient g = reinforce_gradients(p, sp, std::span<const PolicySample>(&s, 1));
  for (const auto& l : g.grads.layers) {
    EXPECT_EQ(l.weight.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }
}

// Two models, chosen 0, R = 1, lambda = 0: d loss / d logits = pi - onehot(0).
// The net reads one bucket that only model 0's embedding uses, so the
// hidden path is 1 for column 0 and 0 for column 1.
TEST(Reinforce, LogitGradientIdentity) {
  using namespace mastune::testing;
  SearchSpace sp({model("a", {0.5, 0.5, 0.5}), skip_model()}, {role("r")});
  SelectorPolicy p = zero_policy(sp);
  p.entropy_weight = 0.0;
  const Task t = task("t");
  SampledDecision d;
  d.supernode = 0;
  d.position_type = PositionType::synthesizer;
  d.model_index = 0;
  PolicySample s{&t, {0}, {d}, {1.0}};
  const Vec& ea = sp.model_embedding(0);
  Eigen::Index b = 0;
  while (ea[b] == 0.0 || sp.model_embedding(1)[b] != 0.0) ++b;
  p.scorer.layers[0].weight(0, sp.embed_dim() + b) = 1.0 / ea[b];
  p.scorer.layers[1].weight(0, 0) = 1.0;
  p.scorer.layers[2].weight(0, 0) = 1.0;
  const Vec pi = selection_distribution(p, sp, t, 0, PositionType::synthesizer);
  EXPECT_NEAR(pi[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-12);
  const PolicyGradient g = reinforce_gradients(p, sp, std::span<const PolicySample>(&s, 1));
  EXPECT_NEAR(g.grads.layers[2].weight(0, 0), pi[0] - 1.0, 1e-12);  // g_0 * 1 + g_1 * 0
  EXPECT_NEAR(g.grads.layers[2].bias[0], 0.0, 1e-12);               // g_0 + g_1
  EXPECT_NEAR(g.loss, -std::log(pi[0]), 1e-12);
}

TEST(Reinforce, UniformTwoModelLogitGrads) {
  using namespace mastune::testing;
  SearchSpace sp({model("a", {0.5, 0.5, 0.5}), skip_model()}, {role("r")});
  SelectorPolicy p = zero_policy(sp);
  p.entropy_weight = 0.0;
  const Task t = task("t");
  SampledDecision d;
  d.supernode = 0;
  d.position_type = PositionType::synthesizer;
  d.model_index = 0;
  PolicySample s{&t, {0}, {d}, {1.0}};
  // Column indicator in the first hidden unit: h = 1 for model 0, 0 for model 1.
  const Vec& ea = sp.model_embedding(0);
  Eigen::Index b = 0;
  while (ea[b] == 0.0 || sp.model_embedding(1)[b] != 0.0) ++b;
  p.scorer.layers[0].weight(0, sp.embed_dim() + b) = 1.0 / ea[b];
  p.scorer.layers[1].weight(0, 0) = 1.0;
  // Output weight 0 keeps both logits at 0, so pi = (0.5, 0.5).
  const PolicyGradient g = reinforce_gradients(p, sp, std::span<const PolicySample>(&s, 1));
  EXPECT_NEAR(g.grads.layers[2].weight(0, 0), -0.5, 1e-15);
  EXPECT_NEAR(g.grads.layers[2].bias[0], 0.0, 1e-15);
}

TEST(Reinforce, LossMatchesFiniteDifferences) {
  const auto& sp = bundled_space();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    SelectorPolicy p = make_selector(sp.embed_dim(), rng, 0.8, 0.05);
    for (auto& l : p.scorer.layers)
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.1, 0.1);
    std::vector<Task> tasks{mastune::testing::task("a", {1, 0, 0}, 0.5, kQuery),
                            mastune::testing::task("b", {0, 1, 0}, 0.3, "write a parser for json")};
    std::vector<PolicySample> batch;
    for (const auto& t : tasks) {
      auto [cfg, dec] = sample_configuration(p, sp, t, {0, 5}, 2, DagTopology::from_edges(0, 2, {{0, 1}}), seed);
      batch.push_back({&t, {0, 5}, dec, {rng.uniform(-1, 1), rng.uniform(-1, 1)}});
    }
    PolicyGradient g = reinforce_gradients(p, sp, batch);
    auto eval = [&] {
      std::uint64_t sig = 0;
      for (const auto& s : batch)
        for (std::size_t n = 0; n < s.roles.size(); ++n)
          for (PositionType pos : {PositionType::proposer, PositionType::synthesizer}) {
            MlpCache c;
            selection_scores(p, sp, context_embedding(*s.task, sp.roles()[s.roles[n]], sp), pos, &c);
            sig = splitmix64(sig ^ relu_signature(c.pre, 2));
          }
      return LossEval{stage1_loss(p, sp, batch), sig};
    };
    GradCheckOptions opt;
    opt.max_coords_per_tensor = 40;
    opt.seed = seed;
    const auto rep = grad_check(eval, views_of(p.scorer, "s"), views_of(g.grads, "s"), opt);
    EXPECT_TRUE(rep.passed) << "seed " << seed << " err " << rep.max_rel_error << " at " << rep.worst_param;
  }
}

TEST(Checkpoint, RoundTripAndFingerprint) {
  const auto& sp = bundled_space();
  Rng rng(8);
  SelectorPolicy p = make_selector(sp.embed_dim(), rng, 0.9, 0.02);
  const auto j = selector_to_json(p, 3, sp);
  const LoadedSelector back = selector_from_json(j, sp);
  EXPECT_EQ(back.proposers, 3u);
  EXPECT_EQ(back.policy.temperature, 0.9);
  EXPECT_EQ(back.policy.scorer.layers[1].weight, p.scorer.layers[1].weight);
  auto bad = j;
  bad["pool_fingerprint"] = "0000";
  EXPECT_THROW(selector_from_json(bad, sp), ValidationError);
}

TEST(Configurations, GreedyAndFixed) {
  const auto& sp = bundled_space();
  Rng rng(8);
  const SelectorPolicy p = make_selector(sp.embed_dim(), rng);
  const Task t = mastune::testing::task("t");
  const auto g = greedy_configuration(p, sp, t, {0, 1, 2}, 2, DagTopology(0, 3));
  for (const auto& a : g.assignments) {
    EXPECT_EQ(a.proposer_models.size(), 2u);
    EXPECT_EQ(a.synthesizer_model,
              argmax_index(selection_scores(p, sp, context_embedding(t, sp.roles()[a.role_index], sp),
                                            PositionType::synthesizer)));
  }
  const auto f = fixed_configuration(sp.strongest_model(), sp, t, {0, 1, 2}, 2, DagTopology(0, 3));
  for (const auto& a : f.assignments) {
    EXPECT_TRUE(a.active);
    EXPECT_EQ(a.synthesizer_model, sp.strongest_model());
  }
}
