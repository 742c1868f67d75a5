#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "mastune/nn.hpp"
#include "mastune/searchspace.hpp"

namespace mastune::testing {

inline std::filesystem::path source_dir() { return MASTUNE_SOURCE_DIR; }

inline const SearchSpace& bundled_space() {
  static const SearchSpace s = load_search_space(source_dir() / "data" / "search_space.json");
  return s;
}

inline ModelProfile model(std::string id, std::vector<double> cap, double pin = 0.0001, double pout = 0.0004,
                          double noise = 0.0) {
  ModelProfile m;
  m.model_id = id;
  m.profile_text = "model " + id + " general assistant";
  m.price_in = pin;
  m.price_out = pout;
  m.capability = std::move(cap);
  m.noise_scale = noise;
  return m;
}

inline ModelProfile skip_model() {
  ModelProfile m;
  m.model_id = "skip";
  m.profile_text = "Special token: Do not assign any LLM";
  m.capability = {0.0, 0.0, 0.0};
  m.is_skip = true;
  return m;
}

inline RoleProfile role(std::string id, std::vector<double> affinity = {1.0, 0.0, 0.0}, bool comparable = true) {
  RoleProfile r;
  r.role_id = id;
  r.name = id;
  r.description = "role " + id + " solves the task";
  r.answer_comparable = comparable;
  r.domain_affinity = std::move(affinity);
  return r;
}

inline Task task(std::string id, std::vector<double> domain = {1.0, 0.0, 0.0}, double difficulty = 0.5,
                 std::string query = "compute the sum of two numbers") {
  Task t;
  t.task_id = std::move(id);
  t.query_text = std::move(query);
  t.domain = std::move(domain);
  t.difficulty = difficulty;
  t.ground_truth_tag = "ANSWER";
  return t;
}

// Same patterned parameters as tests/oracles/golden.py.
inline Dense pattern_dense(int out, int in, int layer) {
  Dense d;
  d.weight.resize(out, in);
  d.bias.resize(out);
  for (int i = 0; i < out; ++i) {
    for (int j = 0; j < in; ++j) d.weight(i, j) = 0.5 * std::sin(1.0 + 1.3 * i + 0.7 * j + layer);
    d.bias[i] = 0.1 * std::cos(i + layer);
  }
  return d;
}

inline Mat pattern_features(int n, int f) {
  Mat x(n, f);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) x(i, j) = std::cos(0.3 * i + 0.11 * j * (j % 3));
  return x;
}

// Weighted sum of outputs, with the ReLU pattern as the kink signature.
inline LossEval mlp_loss(const Mlp& m, const Mat& x, const Mat& w) {
  MlpCache c;
  const Mat y = mlp_forward(m, x, &c);
  return {(y.cwiseProduct(w)).sum(), relu_signature(c.pre, m.layers.size() - 1)};
}

}  // namespace mastune::testing
