#pragma once

// Record of one system execution: every backend call, every supernode's
// outcome, and the system-level result read from the decision node.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "mastune/searchspace.hpp"

namespace mastune {

// Normalized costs are clamped to [0, kCostClampMax] so rewards stay bounded.
inline constexpr double kCostClampMax = 4.0;

struct CallRecord {
  std::size_t supernode = 0;
  std::size_t model = 0;
  bool synthesizer = false;
  long tokens_in = 0;
  long tokens_out = 0;
  double quality = 0.0;
  double cost = 0.0;
};

struct NodeTrace {
  bool active = false;
  double quality = 0.0;      // Q_i, 0 for inactive nodes
  double raw_quality = 0.0;  // before clamping to [0, 1]
  int correct = -1;      // u_i in {-1, +1}
  double cost = 0.0;     // sum over this node's calls
  double normalized_cost = 0.0;
  std::size_t inputs = 0;  // active proposers + active in-neighbors
};

struct ExecutionTrace {
  std::vector<NodeTrace> nodes;  // indexed by supernode, inactive ones included
  std::vector<CallRecord> calls;
  int decision_node = -1;  // -1 when every supernode was skipped
  int final_correct = -1;
  double total_cost = 0.0;
  double normalized_cost = 0.0;
  bool node_rewards_observable = true;
};

inline double normalize_cost(double cost, double budget) {
  return std::min(cost / budget, kCostClampMax);
}

// Token spend of a trace under the pool's prices; the skip entry never bills.
inline double cost_of(const ExecutionTrace& trace, const SearchSpace& space) {
  double c = 0.0;
  for (const auto& call : trace.calls) {
    const ModelProfile& m = space.models().at(call.model);
    if (m.is_skip) continue;
    c += (static_cast<double>(call.tokens_in) * m.price_in + static_cast<double>(call.tokens_out) * m.price_out) / 1000.0;
  }
  return c;
}

}  // namespace mastune
