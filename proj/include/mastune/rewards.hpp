#pragma once

// Cost-aware outcome reward and the node/system mixture used for credit
// assignment.

#include <cmath>
#include <string>
#include <vector>

#include "mastune/error.hpp"
#include "mastune/searchspace.hpp"
#include "mastune/trace.hpp"

namespace mastune {

struct RewardParams {
  double lambda_cost = 0.1;
  double alpha = 0.5;

  void validate() const {
    if (!(lambda_cost >= 0.0) || !std::isfinite(lambda_cost))
      throw ValidationError("rewards: lambda_cost must be a finite value >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("rewards: alpha must lie in [0, 1]");
  }
};

// exp(-lambda C) on success, -exp(lambda C) on failure.
inline double cost_reward(int u, double normalized_cost, double lambda) {
  if (u != 1 && u != -1) throw ValidationError("cost_reward: u must be +1 or -1, got " + std::to_string(u));
  if (!(normalized_cost >= 0.0)) throw ValidationError("cost_reward: normalized cost must be >= 0");
  return u == 1 ? std::exp(-lambda * normalized_cost) : -std::exp(lambda * normalized_cost);
}

inline double effective_reward(double r_node, double r_final, double alpha, bool answer_comparable) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("effective_reward: alpha must lie in [0, 1]");
  if (!answer_comparable) alpha = 0.0;
  return alpha * r_node + (1.0 - alpha) * r_final;
}

struct TraceRewards {
  std::vector<double> effective;  // one per supernode
  std::vector<double> node;       // R_i^node, 0 for inactive supernodes
  double final_reward = 0.0;
};

// `roles[i]` is the role of supernode i. Inactive supernodes inherit the
// final reward; unobservable node outcomes force alpha to 0.
inline TraceRewards trace_rewards(const ExecutionTrace& trace, const std::vector<const RoleProfile*>& roles,
                                  const RewardParams& params) {
  params.validate();
  if (roles.size() != trace.nodes.size())
    throw ShapeError("trace_rewards: " + std::to_string(roles.size()) + " roles for " +
                     std::to_string(trace.nodes.size()) + " supernodes");
  TraceRewards out;
  out.final_reward = cost_reward(trace.final_correct, trace.normalized_cost, params.lambda_cost);
  out.effective.resize(trace.nodes.size());
  out.node.assign(trace.nodes.size(), 0.0);
  for (std::size_t i = 0; i < trace.nodes.size(); ++i) {
    const NodeTrace& n = trace.nodes[i];
    if (!n.active) {
      out.effective[i] = out.final_reward;
      continue;
    }
    out.node[i] = cost_reward(n.correct, n.normalized_cost, params.lambda_cost);
    const bool comparable = roles[i]->answer_comparable && trace.node_rewards_observable;
    out.effective[i] = effective_reward(out.node[i], out.final_reward, params.alpha, comparable);
  }
  return out;
}

}  // namespace mastune
