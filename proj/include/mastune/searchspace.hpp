#pragma once

// Search-space entities: model pool (with the skip token), role catalogue,
// tasks, and the deterministic hashing text embedder that stands in for a
// frozen sentence encoder.

#include <Eigen/Core>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mastune/error.hpp"
#include "mastune/rng.hpp"

namespace mastune {

using Vec = Eigen::VectorXd;

inline constexpr int kDefaultEmbedDim = 384;
inline constexpr std::string_view kSeparator = " [SEP] ";

struct ModelProfile {
  std::string model_id;
  std::string profile_text;
  double price_in = 0.0;   // per 1k input tokens
  double price_out = 0.0;  // per 1k output tokens
  std::vector<double> capability;  // simulation only, one entry per task domain
  double noise_scale = 0.0;        // simulation only
  bool is_skip = false;
};

struct RoleProfile {
  std::string role_id;
  std::string name;
  std::string description;
  bool answer_comparable = true;
  std::vector<double> domain_affinity;  // simulation only
};

struct Task {
  std::string task_id;
  std::string query_text;
  std::vector<double> domain;  // one-hot
  double difficulty = 0.0;
  std::string ground_truth_tag;

  std::size_t domain_index() const {
    return static_cast<std::size_t>(
        std::distance(domain.begin(), std::max_element(domain.begin(), domain.end())));
  }
};

// ---------------------------------------------------------------------------
// Embedder

// Lowercased alphanumeric runs; everything else separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c < 0x80 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline constexpr std::uint64_t kSignHashBasis = 0x84222325CBF29CE4ULL;

// Signed feature hashing into `dim` buckets, then L2 normalization.
// Text without tokens maps to the zero vector.
inline Vec embed_text(std::string_view text, int dim = kDefaultEmbedDim) {
  if (dim < 8) throw ValidationError("embed_text: dim must be >= 8, got " + std::to_string(dim));
  Vec v = Vec::Zero(dim);
  for (const auto& tok : tokenize(text)) {
    const std::uint64_t bucket = fnv1a64(tok) % static_cast<std::uint64_t>(dim);
    const double sign = (fnv1a64(tok, kSignHashBasis) & 1ULL) == 0 ? 1.0 : -1.0;
    v[static_cast<Eigen::Index>(bucket)] += sign;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

// ---------------------------------------------------------------------------
// SearchSpace

class SearchSpace {
 public:
  SearchSpace() = default;

  SearchSpace(std::vector<ModelProfile> models, std::vector<RoleProfile> roles,
              int embed_dim = kDefaultEmbedDim, std::vector<std::string> domains = {})
      : models_(std::move(models)),
        roles_(std::move(roles)),
        domains_(std::move(domains)),
        embed_dim_(embed_dim) {
    validate();
    model_embeddings_.reserve(models_.size());
    for (const auto& m : models_) model_embeddings_.push_back(embed_text(m.profile_text, embed_dim_));
  }

  const std::vector<ModelProfile>& models() const { return models_; }
  const std::vector<RoleProfile>& roles() const { return roles_; }
  const std::vector<std::string>& domains() const { return domains_; }
  int embed_dim() const { return embed_dim_; }
  std::size_t num_domains() const { return domains_.size(); }
  std::size_t num_models() const { return models_.size(); }
  std::size_t skip_index() const { return skip_index_; }

  std::size_t model_index(std::string_view id) const {
    for (std::size_t i = 0; i < models_.size(); ++i)
      if (models_[i].model_id == id) return i;
    throw LookupError("unknown model_id '" + std::string(id) + "'");
  }

  std::size_t role_index(std::string_view id) const {
    for (std::size_t i = 0; i < roles_.size(); ++i)
      if (roles_[i].role_id == id) return i;
    throw LookupError("unknown role_id '" + std::string(id) + "'");
  }

  const RoleProfile& role(std::string_view id) const { return roles_[role_index(id)]; }

  // Precomputed at construction; the space is immutable afterwards.
  const Vec& model_embedding(std::size_t i) const { return model_embeddings_.at(i); }

  // Non-skip model with the highest mean capability; ties go to the lower index.
  std::size_t strongest_model() const {
    std::size_t best = models_.size();
    double best_score = -1.0;
    for (std::size_t i = 0; i < models_.size(); ++i) {
      if (models_[i].is_skip) continue;
      double s = 0.0;
      for (double c : models_[i].capability) s += c;
      s /= static_cast<double>(std::max<std::size_t>(1, models_[i].capability.size()));
      if (s > best_score) {
        best_score = s;
        best = i;
      }
    }
    return best;
  }

  // Hash of the model profile texts, used to refuse mismatched checkpoints.
  std::string fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& m : models_) {
      h = fnv1a64(m.model_id, h);
      h = fnv1a64("\x1f", h);
      h = fnv1a64(m.profile_text, h);
      h = fnv1a64("\x1e", h);
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }

 private:
  void validate() {
    if (embed_dim_ < 8) throw ValidationError("embed_dim must be >= 8");
    if (models_.size() < 2) throw ValidationError("search space needs at least 2 models (incl. skip)");
    if (roles_.empty()) throw ValidationError("search space needs at least 1 role");
    const std::size_t dims = domains_.empty() ? models_.front().capability.size() : domains_.size();
    if (domains_.empty()) {
      for (std::size_t d = 0; d < dims; ++d) domains_.push_back("domain" + std::to_string(d));
    }
    std::set<std::string> ids;
    std::size_t skips = 0;
    for (std::size_t i = 0; i < models_.size(); ++i) {
      const auto& m = models_[i];
      const std::string where = "models[" + std::to_string(i) + "]";
      if (m.model_id.empty()) throw ValidationError(where + ".model_id is empty");
      if (!ids.insert(m.model_id).second) throw ValidationError(where + ".model_id duplicate '" + m.model_id + "'");
      if (!(m.price_in >= 0.0) || !std::isfinite(m.price_in))
        throw ValidationError(where + ".price_in must be finite and >= 0");
      if (!(m.price_out >= 0.0) || !std::isfinite(m.price_out))
        throw ValidationError(where + ".price_out must be finite and >= 0");
      if (!(m.noise_scale >= 0.0) || !std::isfinite(m.noise_scale))
        throw ValidationError(where + ".noise_scale must be finite and >= 0");
      if (m.capability.size() != dims)
        throw ValidationError(where + ".capability must have " + std::to_string(dims) + " entries");
      for (double c : m.capability)
        if (!(c >= 0.0 && c <= 1.0)) throw ValidationError(where + ".capability entries must lie in [0,1]");
      if (m.is_skip) {
        ++skips;
        skip_index_ = i;
        if (m.price_in != 0.0 || m.price_out != 0.0)
          throw ValidationError(where + ".price_in/price_out must be 0 for the skip entry");
        for (double c : m.capability)
          if (c != 0.0) throw ValidationError(where + ".capability must be 0 for the skip entry");
      }
    }
    if (skips != 1)
      throw ValidationError("models.is_skip must be true for exactly one entry, found " + std::to_string(skips));
    ids.clear();
    for (std::size_t i = 0; i < roles_.size(); ++i) {
      const auto& r = roles_[i];
      const std::string where = "roles[" + std::to_string(i) + "]";
      if (r.role_id.empty()) throw ValidationError(where + ".role_id is empty");
      if (!ids.insert(r.role_id).second) throw ValidationError(where + ".role_id duplicate '" + r.role_id + "'");
      if (r.description.empty()) throw ValidationError(where + ".description is empty");
      if (r.domain_affinity.size() != dims)
        throw ValidationError(where + ".domain_affinity must have " + std::to_string(dims) + " entries");
      for (double a : r.domain_affinity)
        if (!(a >= 0.0 && a <= 1.0)) throw ValidationError(where + ".domain_affinity entries must lie in [0,1]");
    }
  }

  std::vector<ModelProfile> models_;
  std::vector<RoleProfile> roles_;
  std::vector<std::string> domains_;
  int embed_dim_ = kDefaultEmbedDim;
  std::size_t skip_index_ = 0;
  std::vector<Vec> model_embeddings_;
};

inline Vec model_embedding(const ModelProfile& model, const SearchSpace& space) {
  return embed_text(model.profile_text, space.embed_dim());
}

// An empty query contributes nothing, not even its separator.
inline std::string context_text(const Task& task, const RoleProfile& role) {
  std::string s;
  if (!task.query_text.empty()) {
    s = task.query_text;
    s += kSeparator;
  }
  s += role.name;
  s += kSeparator;
  s += role.description;
  return s;
}

inline Vec context_embedding(const Task& task, const RoleProfile& role, const SearchSpace& space) {
  return embed_text(context_text(task, role), space.embed_dim());
}

inline Vec context_embedding(const Task& task, std::string_view role_id, const SearchSpace& space) {
  return context_embedding(task, space.role(role_id), space);
}

// ---------------------------------------------------------------------------
// JSON I/O

inline SearchSpace search_space_from_json(const nlohmann::json& j) {
  try {
    std::vector<ModelProfile> models;
    for (const auto& m : j.at("models")) {
      ModelProfile p;
      p.model_id = m.at("model_id").get<std::string>();
      p.profile_text = m.at("profile_text").get<std::string>();
      p.price_in = m.at("price_in").get<double>();
      p.price_out = m.at("price_out").get<double>();
      p.capability = m.at("capability").get<std::vector<double>>();
      p.noise_scale = m.value("noise_scale", 0.0);
      p.is_skip = m.value("is_skip", false);
      models.push_back(std::move(p));
    }
    std::vector<RoleProfile> roles;
    for (const auto& r : j.at("roles")) {
      RoleProfile p;
      p.role_id = r.at("role_id").get<std::string>();
      p.name = r.at("name").get<std::string>();
      p.description = r.at("description").get<std::string>();
      p.answer_comparable = r.value("answer_comparable", true);
      p.domain_affinity = r.at("domain_affinity").get<std::vector<double>>();
      roles.push_back(std::move(p));
    }
    const int dim = j.value("embed_dim", kDefaultEmbedDim);
    auto domains = j.value("domains", std::vector<std::string>{});
    return SearchSpace(std::move(models), std::move(roles), dim, std::move(domains));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("search space: ") + e.what());
  }
}

inline nlohmann::json search_space_to_json(const SearchSpace& space) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["embed_dim"] = space.embed_dim();
  j["domains"] = space.domains();
  j["models"] = nlohmann::json::array();
  for (const auto& m : space.models()) {
    j["models"].push_back({{"model_id", m.model_id},
                           {"profile_text", m.profile_text},
                           {"price_in", m.price_in},
                           {"price_out", m.price_out},
                           {"capability", m.capability},
                           {"noise_scale", m.noise_scale},
                           {"is_skip", m.is_skip}});
  }
  j["roles"] = nlohmann::json::array();
  for (const auto& r : space.roles()) {
    j["roles"].push_back({{"role_id", r.role_id},
                          {"name", r.name},
                          {"description", r.description},
                          {"answer_comparable", r.answer_comparable},
                          {"domain_affinity", r.domain_affinity}});
  }
  return j;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

inline SearchSpace load_search_space(const std::filesystem::path& path) {
  return search_space_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Synthetic task family

struct TaskFamily {
  std::size_t count = 50;
  std::size_t num_domains = 3;
  double difficulty_lo = 0.2;
  double difficulty_hi = 0.8;
  std::uint64_t seed = 0;
};

namespace detail {

inline const std::vector<std::vector<std::string_view>>& domain_vocabulary() {
  static const std::vector<std::vector<std::string_view>> vocab = {
      {"solve", "equation", "integral", "derivative", "probability", "geometry", "triangle", "prime",
       "polynomial", "matrix", "sum", "series", "limit", "ratio", "algebra", "number"},
      {"implement", "function", "array", "string", "sort", "return", "list", "parse", "recursion",
       "loop", "tree", "graph", "hash", "index", "compile", "test"},
      {"history", "law", "economics", "biology", "psychology", "medicine", "philosophy", "policy",
       "market", "treaty", "election", "culture", "ethics", "theory", "evidence", "society"},
  };
  return vocab;
}

}  // namespace detail

inline std::vector<Task> generate_tasks(const TaskFamily& family) {
  if (family.num_domains == 0) throw ValidationError("task family needs at least one domain");
  if (!(family.difficulty_lo >= 0.0 && family.difficulty_lo <= family.difficulty_hi &&
        family.difficulty_hi <= 1.0))
    throw ValidationError("task family difficulty range must satisfy 0 <= lo <= hi <= 1");
  const auto& vocab = detail::domain_vocabulary();
  Rng rng(mix_seed(family.seed, 0x7A5C));
  std::vector<Task> tasks;
  tasks.reserve(family.count);
  for (std::size_t i = 0; i < family.count; ++i) {
    Task t;
    std::ostringstream id;
    id << "task-" << std::setw(5) << std::setfill('0') << i;
    t.task_id = id.str();
    const std::size_t d = static_cast<std::size_t>(rng.below(family.num_domains));
    t.domain.assign(family.num_domains, 0.0);
    t.domain[d] = 1.0;
    t.difficulty = rng.uniform(family.difficulty_lo, family.difficulty_hi);
    std::string q = "question " + std::to_string(i) + ":";
    const std::size_t words = 6 + static_cast<std::size_t>(rng.below(6));
    for (std::size_t w = 0; w < words; ++w) {
      q += ' ';
      if (d < vocab.size()) {
        q += vocab[d][rng.below(vocab[d].size())];
      } else {
        q += "topic" + std::to_string(d) + "x" + std::to_string(rng.below(16));
      }
    }
    t.query_text = std::move(q);
    t.ground_truth_tag = "answer-" + std::to_string(i);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

inline void validate_task(const Task& t, std::size_t num_domains) {
  if (t.domain.size() != num_domains)
    throw ValidationError("task '" + t.task_id + "' domain has wrong length");
  std::size_t ones = 0;
  for (double x : t.domain) {
    if (x == 1.0) ++ones;
    else if (x != 0.0) throw ValidationError("task '" + t.task_id + "' domain must be one-hot");
  }
  if (ones != 1) throw ValidationError("task '" + t.task_id + "' domain must be one-hot");
  if (!(t.difficulty >= 0.0 && t.difficulty <= 1.0))
    throw ValidationError("task '" + t.task_id + "' difficulty must lie in [0,1]");
}

inline nlohmann::json tasks_to_json(const std::vector<Task>& tasks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tasks) {
    arr.push_back({{"task_id", t.task_id},
                   {"query_text", t.query_text},
                   {"domain", t.domain},
                   {"difficulty", t.difficulty},
                   {"ground_truth_tag", t.ground_truth_tag}});
  }
  return arr;
}

inline std::vector<Task> tasks_from_json(const nlohmann::json& arr) {
  std::vector<Task> tasks;
  for (const auto& j : arr) {
    Task t;
    t.task_id = j.at("task_id").get<std::string>();
    t.query_text = j.at("query_text").get<std::string>();
    t.domain = j.at("domain").get<std::vector<double>>();
    t.difficulty = j.at("difficulty").get<double>();
    t.ground_truth_tag = j.value("ground_truth_tag", std::string{});
    validate_task(t, t.domain.size());
    tasks.push_back(std::move(t));
  }
  return tasks;
}

}  // namespace mastune
