#include <gtest/gtest.h>

#include <cmath>

#include "mastune/rewards.hpp"
#include "test_support.hpp"

using namespace mastune;
using namespace mastune::testing;

namespace {

NodeTrace node(bool active, int correct, double ncost) {
  NodeTrace n;
  n.active = active;
  n.correct = active ? correct : -1;
  n.normalized_cost = ncost;
  return n;
}

}  // namespace

TEST(CostReward, Examples) {
  EXPECT_DOUBLE_EQ(cost_reward(1, 0.0, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(cost_reward(-1, 0.0, 0.1), -1.0);
  EXPECT_NEAR(cost_reward(1, 2.0, 0.1), std::exp(-0.2), 1e-15);
  EXPECT_NEAR(cost_reward(-1, 2.0, 0.1), -std::exp(0.2), 1e-15);
  EXPECT_DOUBLE_EQ(cost_reward(1, 3.0, 0.0), 1.0);
}

TEST(CostReward, RejectsBadInputs) {
  EXPECT_THROW(cost_reward(0, 0.0, 0.1), ValidationError);
  EXPECT_THROW(cost_reward(2, 0.0, 0.1), ValidationError);
  EXPECT_THROW(cost_reward(1, -0.1, 0.1), ValidationError);
  EXPECT_THROW(cost_reward(1, std::nan(""), 0.1), ValidationError);
}

TEST(CostReward, MonotoneInCost) {
  for (double c = 0.0; c < kCostClampMax; c += 0.25) {
    EXPECT_GT(cost_reward(1, c, 0.3), cost_reward(1, c + 0.25, 0.3));
    EXPECT_GT(cost_reward(-1, c, 0.3), cost_reward(-1, c + 0.25, 0.3));
    EXPECT_GT(cost_reward(1, c, 0.3), 0.0);
    EXPECT_LT(cost_reward(-1, c, 0.3), 0.0);
  }
}

TEST(EffectiveReward, Examples) {
  EXPECT_DOUBLE_EQ(effective_reward(-1.0, 1.0, 0.5, true), 0.0);
  EXPECT_DOUBLE_EQ(effective_reward(0.9, 0.3, 0.5, false), 0.3);
  EXPECT_DOUBLE_EQ(effective_reward(0.9, 0.3, 1.0, true), 0.9);
  EXPECT_DOUBLE_EQ(effective_reward(0.9, 0.3, 0.0, true), 0.3);
  EXPECT_THROW(effective_reward(0.0, 0.0, 1.5, true), ValidationError);
  EXPECT_THROW(effective_reward(0.0, 0.0, -0.1, true), ValidationError);
}

TEST(RewardParams, Validate) {
  RewardParams p;
  EXPECT_NO_THROW(p.validate());
  p.lambda_cost = -1.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p.lambda_cost = 0.1;
  p.alpha = 2.0;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(TraceRewards, AllCorrectZeroCost) {
  const RoleProfile r = role("r");
  ExecutionTrace tr;
  tr.nodes = {node(true, 1, 0.0), node(true, 1, 0.0)};
  tr.final_correct = 1;
  const auto out = trace_rewards(tr, {&r, &r}, RewardParams{});
  EXPECT_DOUBLE_EQ(out.final_reward, 1.0);
  for (double e : out.effective) EXPECT_DOUBLE_EQ(e, 1.0);
}

TEST(TraceRewards, NodeCreditMixesWithFinal) {
  const RoleProfile r = role("r");
  const RoleProfile nc = role("nc", {1, 0, 0}, false);
  ExecutionTrace tr;
  tr.nodes = {node(true, -1, 0.0), node(true, -1, 0.0), node(false, -1, 0.0)};
  tr.final_correct = 1;
  RewardParams p;
  p.lambda_cost = 0.0;
  const auto out = trace_rewards(tr, {&r, &nc, &r}, p);
  EXPECT_DOUBLE_EQ(out.effective[0], 0.0);  // 0.5 * -1 + 0.5 * 1
  EXPECT_DOUBLE_EQ(out.effective[1], 1.0);  // not comparable
  EXPECT_DOUBLE_EQ(out.effective[2], 1.0);  // inactive inherits final
  EXPECT_DOUBLE_EQ(out.node[2], 0.0);
}

TEST(TraceRewards, UnobservableForcesSystemReward) {
  const RoleProfile r = role("r");
  ExecutionTrace tr;
  tr.nodes = {node(true, 1, 0.0)};
  tr.final_correct = -1;
  tr.node_rewards_observable = false;
  RewardParams p;
  p.alpha = 1.0;
  const auto out = trace_rewards(tr, {&r}, p);
  EXPECT_DOUBLE_EQ(out.effective[0], out.final_reward);
  EXPECT_DOUBLE_EQ(out.final_reward, -1.0);
}

TEST(TraceRewards, AllSkippedHasNoReward) {
  const RoleProfile r = role("r");
  ExecutionTrace tr;
  tr.nodes = {node(false, -1, 0.0)};
  tr.final_correct = -1;
  const auto out = trace_rewards(tr, {&r}, RewardParams{});
  EXPECT_DOUBLE_EQ(out.final_reward, -1.0);
}

TEST(TraceRewards, ShapeMismatch) {
  const RoleProfile r = role("r");
  ExecutionTrace tr;
  tr.nodes = {node(true, 1, 0.0), node(true, 1, 0.0)};
  tr.final_correct = 1;
  EXPECT_THROW(trace_rewards(tr, {&r}, RewardParams{}), ShapeError);
}

// Property: effective rewards stay inside the convex hull of node and final rewards.
TEST(Property, EffectiveRewardBounded) {
  Rng rng(8);
  const RoleProfile r = role("r");
  for (int t = 0; t < 2000; ++t) {
    ExecutionTrace tr;
    const std::size_t n = 1 + rng.below(5);
    for (std::size_t i = 0; i < n; ++i)
      tr.nodes.push_back(node(rng.uniform() < 0.7, rng.uniform() < 0.5 ? 1 : -1, kCostClampMax * rng.uniform()));
    tr.final_correct = rng.uniform() < 0.5 ? 1 : -1;
    tr.normalized_cost = kCostClampMax * rng.uniform();
    RewardParams p;
    p.alpha = rng.uniform();
    p.lambda_cost = rng.uniform();
    const auto out = trace_rewards(tr, std::vector<const RoleProfile*>(n, &r), p);
    for (std::size_t i = 0; i < n; ++i) {
      const double lo = std::min(out.node[i], out.final_reward), hi = std::max(out.node[i], out.final_reward);
      const double e = out.effective[i];
      ASSERT_GE(e, (tr.nodes[i].active ? lo : out.final_reward) - 1e-12);
      ASSERT_LE(e, (tr.nodes[i].active ? hi : out.final_reward) + 1e-12);
    }
  }
}
