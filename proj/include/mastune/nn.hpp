#pragma once

// Small trainable numeric core: dense layers and MLPs with manual reverse
// mode, a two-layer GCN encoder with mean pooling, softmax, Adam with
// decoupled weight decay, finite-difference gradient checks, and tensor
// (de)serialization for checkpoints.

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mastune/error.hpp"
#include "mastune/graphs.hpp"
#include "mastune/rng.hpp"

namespace mastune {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr int kGcnHidden = 256;

// weight is out x in.
struct Dense {
  Mat weight;
  Vec bias;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

struct Mlp {
  std::vector<Dense> layers;

  Eigen::Index in_dim() const { return layers.empty() ? 0 : layers.front().in(); }
  Eigen::Index out_dim() const { return layers.empty() ? 0 : layers.back().out(); }
};

// He-uniform init for every layer, zero biases.
inline Dense make_dense(Eigen::Index in, Eigen::Index out, Rng& rng) {
  Dense d;
  d.weight.resize(out, in);
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  for (Eigen::Index i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = rng.uniform(-bound, bound);
  d.bias = Vec::Zero(out);
  return d;
}

// sizes = {in, hidden..., out}
inline Mlp make_mlp(const std::vector<int>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw ShapeError("make_mlp: need at least input and output sizes");
  Mlp m;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) m.layers.push_back(make_dense(sizes[l], sizes[l + 1], rng));
  return m;
}

inline Dense zeros_like(const Dense& d) {
  return Dense{Mat::Zero(d.weight.rows(), d.weight.cols()), Vec::Zero(d.bias.size())};
}

inline Mlp zeros_like(const Mlp& m) {
  Mlp z;
  for (const auto& l : m.layers) z.layers.push_back(zeros_like(l));
  return z;
}

inline void add_scaled(Dense& acc, const Dense& g, double s) {
  acc.weight += s * g.weight;
  acc.bias += s * g.bias;
}

inline void add_scaled(Mlp& acc, const Mlp& g, double s) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) add_scaled(acc.layers[l], g.layers[l], s);
}

// ---------------------------------------------------------------------------
// Sparse-aware products. Hashed embeddings are mostly zeros, so the first
// layer of every network sees very sparse inputs.

inline bool mostly_zero(const Mat& x) {
  const Eigen::Index n = x.size();
  Eigen::Index nz = 0;
  for (Eigen::Index i = 0; i < n; ++i) nz += x.data()[i] != 0.0;
  return nz * 4 < n;
}

// W * X with X given as (in x batch).
inline Mat left_times(const Mat& w, const Mat& x) {
  if (mostly_zero(x)) {
    const SparseMat xs = x.sparseView();
    return w * xs;
  }
  return w * x;
}

// acc += k * G * X^T where X is (in x batch): gradient of W in W*X, added in place.
inline void add_outer(Mat& acc, double k, const Mat& g, const Mat& x) {
  if (mostly_zero(x)) {
    for (Eigen::Index b = 0; b < x.cols(); ++b)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        if (const double v = x(i, b); v != 0.0) acc.col(i) += (k * v) * g.col(b);
    return;
  }
  acc.noalias() += k * g * x.transpose();
}

// ---------------------------------------------------------------------------
// MLP

// inputs[l] is the input of layer l (in_l x batch); pre[l] its pre-activation.
struct MlpCache {
  std::vector<Mat> inputs;
  std::vector<Mat> pre;
};

struct MlpGrads {
  Mlp params;
  Mat d_input;
};

// Affine -> ReLU for every hidden layer, affine output. Columns are samples.
inline Mat mlp_forward(const Mlp& m, const Mat& x, MlpCache* cache = nullptr) {
  if (m.layers.empty()) throw ShapeError("mlp_forward: empty network");
  if (x.rows() != m.in_dim())
    throw ShapeError("mlp_forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                     std::to_string(m.in_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Mat h = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const Dense& d = m.layers[l];
    Mat pre = left_times(d.weight, h);
    pre.colwise() += d.bias;
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(pre);
    }
    if (l + 1 < m.layers.size()) {
      h = pre.cwiseMax(0.0);
    } else {
      h = std::move(pre);
    }
  }
  return h;
}

inline Vec mlp_forward(const Mlp& m, const Vec& x, MlpCache* cache = nullptr) {
  const Mat out = mlp_forward(m, Mat(x), cache);
  return out.col(0);
}

// Exact reverse mode for mlp_forward, adding k times the parameter gradient
// into `acc`. d_out is (out x batch); returns d loss / d input when asked.
inline Mat mlp_backward_add(const Mlp& m, const MlpCache& cache, const Mat& d_out, double k, Mlp& acc,
                            bool want_input_grad = true) {
  const std::size_t n = m.layers.size();
  if (cache.inputs.size() != n || cache.pre.size() != n)
    throw ShapeError("mlp_backward: stale cache (layer count mismatch)");
  for (std::size_t l = 0; l < n; ++l) {
    if (cache.inputs[l].rows() != m.layers[l].in() || cache.pre[l].rows() != m.layers[l].out())
      throw ShapeError("mlp_backward: stale cache (shape mismatch at layer " + std::to_string(l) + ")");
  }
  if (d_out.rows() != m.out_dim() || d_out.cols() != cache.pre.back().cols())
    throw ShapeError("mlp_backward: upstream gradient shape mismatch");
  if (acc.layers.size() != n) throw ShapeError("mlp_backward: accumulator layer count mismatch");
  Mat delta = d_out;
  for (std::size_t l = n; l-- > 0;) {
    const Dense& d = m.layers[l];
    if (l + 1 < n) delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    add_outer(acc.layers[l].weight, k, delta, cache.inputs[l]);
    acc.layers[l].bias += k * delta.rowwise().sum();
    if (l > 0 || want_input_grad) delta = d.weight.transpose() * delta;
  }
  return want_input_grad ? delta : Mat();
}

inline MlpGrads mlp_backward(const Mlp& m, const MlpCache& cache, const Mat& d_out, bool want_input_grad = true) {
  MlpGrads g;
  g.params = zeros_like(m);
  g.d_input = mlp_backward_add(m, cache, d_out, 1.0, g.params, want_input_grad);
  return g;
}

// Activation-pattern hash; changes when a finite-difference probe crosses a ReLU kink.
inline std::uint64_t relu_signature(const std::vector<Mat>& pre, std::size_t hidden_count) {
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (std::size_t l = 0; l < hidden_count && l < pre.size(); ++l) {
    const Mat& p = pre[l];
    for (Eigen::Index i = 0; i < p.size(); ++i) h = splitmix64(h ^ (p.data()[i] > 0.0 ? 0x1ULL : 0x2ULL));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Softmax / losses

inline Vec softmax(const Vec& logits, double temperature = 1.0) {
  if (!(temperature > 0.0)) throw ValidationError("softmax: temperature must be > 0");
  if (logits.size() == 0) throw ShapeError("softmax: empty logits");
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (!std::isfinite(logits[i])) throw NumericError("softmax: non-finite logit");
  const Vec z = logits / temperature;
  const Vec e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

inline double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// BCE(y, sigmoid(s)) computed from the logit without overflow.
inline double bce_with_logit(double s, double y) {
  return std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
}

// ---------------------------------------------------------------------------
// Parameter views: name + flat row-major storage + shape. Adam, checkpoints
// and gradient checks all operate on these.

struct ParamView {
  std::string name;
  std::span<double> data;
  std::vector<Eigen::Index> shape;
};

inline void append_views(Dense& d, const std::string& prefix, std::vector<ParamView>& out) {
  out.push_back({prefix + ".weight", {d.weight.data(), static_cast<std::size_t>(d.weight.size())},
                 {d.weight.rows(), d.weight.cols()}});
  out.push_back({prefix + ".bias", {d.bias.data(), static_cast<std::size_t>(d.bias.size())}, {d.bias.size()}});
}

inline void append_views(Mlp& m, const std::string& prefix, std::vector<ParamView>& out) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) append_views(m.layers[l], prefix + "." + std::to_string(l), out);
}

inline std::vector<ParamView> views_of(Mlp& m, const std::string& prefix) {
  std::vector<ParamView> v;
  append_views(m, prefix, v);
  return v;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 2e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

// Bias-corrected Adam. Decoupled weight decay (p -= lr*wd*p) is applied
// before the moment update. Gradients are validated before anything moves.
inline void adam_step(AdamState& st, const std::vector<ParamView>& params, const std::vector<ParamView>& grads) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].data.size() != grads[k].data.size())
      throw ShapeError("adam_step: shape mismatch for '" + params[k].name + "'");
    for (double g : grads[k].data)
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in '" + params[k].name + "'");
  }
  ++st.step_count;
  const double t = static_cast<double>(st.step_count);
  const double bc1 = 1.0 - std::pow(st.beta1, t);
  const double bc2 = 1.0 - std::pow(st.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = st.first_moment[params[k].name];
    auto& v = st.second_moment[params[k].name];
    const std::size_t n = params[k].data.size();
    if (m.size() != n) m.assign(n, 0.0);
    if (v.size() != n) v.assign(n, 0.0);
    double* p = params[k].data.data();
    const double* g = grads[k].data.data();
    for (std::size_t i = 0; i < n; ++i) {
      p[i] -= st.lr * st.weight_decay * p[i];
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// GCN encoder

struct GcnParams {
  Dense conv1;
  Dense conv2;
  double dropout_rate = 0.1;
};

inline GcnParams make_gcn(Eigen::Index in_features, Rng& rng, Eigen::Index hidden = kGcnHidden,
                          double dropout = 0.1) {
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("make_gcn: dropout must lie in [0,1)");
  GcnParams p;
  p.conv1 = make_dense(in_features, hidden, rng);
  p.conv2 = make_dense(hidden, hidden, rng);
  p.dropout_rate = dropout;
  return p;
}

// D^-1/2 (A + A^T + I) D^-1/2 with D the row sums of (A + A^T + I).
// A pair connected in both directions would count twice; DAGs never have that.
inline Mat normalized_adjacency(const DagTopology& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Mat s = Mat::Identity(n, n);
  for (auto [i, j] : g.edges()) {
    s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += 1.0;
    s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) += 1.0;
  }
  const Vec dinv = s.rowwise().sum().array().rsqrt();
  return dinv.asDiagonal() * s * dinv.asDiagonal();
}

struct GcnCache {
  Mat x;        // N x F
  Mat a_hat;    // N x N
  Mat h1_pre;   // N x H
  Mat scale1;   // dropout multipliers (ones in eval mode)
  Mat h1d;      // N x H
  Mat h2_pre;   // N x H
  Mat scale2;
};

struct GcnGrads {
  Dense conv1;
  Dense conv2;
  Mat d_x;
};

namespace detail {

inline Mat dropout_scale(Eigen::Index rows, Eigen::Index cols, double rate, bool train, Rng* rng) {
  Mat s = Mat::Ones(rows, cols);
  if (!train || rate <= 0.0) return s;
  if (!rng) throw ValidationError("gcn_encode: train mode needs an rng for dropout");
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng->uniform() < rate ? 0.0 : keep;
  return s;
}

// X * W^T with X (N x F) possibly sparse.
inline Mat features_times_weight_t(const Mat& x, const Mat& w) {
  if (mostly_zero(x)) {
    const SparseMat xs = x.sparseView();
    return xs * w.transpose();
  }
  return x * w.transpose();
}

}  // namespace detail

// Z = ReLU(Â ReLU(Â X W1^T + b1) W2^T + b2), dropout after each ReLU in train
// mode, z_G = column mean of Z.
inline Vec gcn_encode(const GcnParams& p, const Mat& x, const Mat& a_hat, bool train_mode, Rng* rng,
                      GcnCache* cache = nullptr) {
  const Eigen::Index n = x.rows();
  if (a_hat.rows() != n || a_hat.cols() != n) throw ShapeError("gcn_encode: adjacency does not match node count");
  if (x.cols() != p.conv1.in())
    throw ShapeError("gcn_encode: feature width " + std::to_string(x.cols()) + " != " + std::to_string(p.conv1.in()));
  Mat h1_pre = a_hat * detail::features_times_weight_t(x, p.conv1.weight);
  h1_pre.rowwise() += p.conv1.bias.transpose();
  Mat scale1 = detail::dropout_scale(n, h1_pre.cols(), p.dropout_rate, train_mode, rng);
  Mat h1d = h1_pre.cwiseMax(0.0).cwiseProduct(scale1);
  Mat h2_pre = a_hat * (h1d * p.conv2.weight.transpose());
  h2_pre.rowwise() += p.conv2.bias.transpose();
  Mat scale2 = detail::dropout_scale(n, h2_pre.cols(), p.dropout_rate, train_mode, rng);
  const Mat z = h2_pre.cwiseMax(0.0).cwiseProduct(scale2);
  Vec zg = z.colwise().mean().transpose();
  if (cache) {
    cache->x = x;
    cache->a_hat = a_hat;
    cache->h1_pre = std::move(h1_pre);
    cache->scale1 = std::move(scale1);
    cache->h1d = std::move(h1d);
    cache->h2_pre = std::move(h2_pre);
    cache->scale2 = std::move(scale2);
  }
  return zg;
}

inline Vec gcn_encode(const GcnParams& p, const Mat& x, const DagTopology& g, bool train_mode, Rng* rng,
                      GcnCache* cache = nullptr) {
  if (static_cast<Eigen::Index>(g.num_nodes()) != x.rows())
    throw ShapeError("gcn_encode: graph has " + std::to_string(g.num_nodes()) + " nodes, features have " +
                     std::to_string(x.rows()) + " rows");
  return gcn_encode(p, x, normalized_adjacency(g), train_mode, rng, cache);
}

// Adds k times the parameter gradient into `acc`; returns d loss / d (X W1^T).
inline Mat gcn_backward_add(const GcnParams& p, const GcnCache& c, const Vec& d_z, double k, GcnParams& acc) {
  const Eigen::Index n = c.x.rows();
  if (c.h1_pre.cols() != p.conv1.out() || c.h2_pre.cols() != p.conv2.out() || d_z.size() != p.conv2.out())
    throw ShapeError("gcn_backward: stale cache");
  Mat d_rows = (d_z / static_cast<double>(n)).transpose().replicate(n, 1);
  Mat d_h2pre = d_rows.cwiseProduct(c.scale2).cwiseProduct((c.h2_pre.array() > 0.0).cast<double>().matrix());
  acc.conv2.bias += k * d_h2pre.colwise().sum().transpose();
  const Mat d_hw = c.a_hat.transpose() * d_h2pre;
  acc.conv2.weight.noalias() += k * d_hw.transpose() * c.h1d;
  const Mat d_h1d = d_hw * p.conv2.weight;
  const Mat d_h1pre = d_h1d.cwiseProduct(c.scale1).cwiseProduct((c.h1_pre.array() > 0.0).cast<double>().matrix());
  acc.conv1.bias += k * d_h1pre.colwise().sum().transpose();
  Mat d_xw = c.a_hat.transpose() * d_h1pre;  // N x H
  add_outer(acc.conv1.weight, k, d_xw.transpose(), c.x.transpose());
  return d_xw;
}

inline GcnGrads gcn_backward(const GcnParams& p, const GcnCache& c, const Vec& d_z, bool want_input_grad = false) {
  GcnParams acc;
  acc.conv1 = zeros_like(p.conv1);
  acc.conv2 = zeros_like(p.conv2);
  const Mat d_xw = gcn_backward_add(p, c, d_z, 1.0, acc);
  GcnGrads g;
  g.conv1 = std::move(acc.conv1);
  g.conv2 = std::move(acc.conv2);
  if (want_input_grad) g.d_x = d_xw * p.conv1.weight;
  return g;
}

inline std::uint64_t gcn_signature(const GcnCache& c) { return relu_signature({c.h1_pre, c.h2_pre}, 2); }

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct LossEval {
  double loss = 0.0;
  std::uint64_t signature = 0;  // ReLU pattern; 0 when not tracked
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  double floor = 1e-6;                  // relative error uses max(|a|, |n|, floor)
  std::size_t max_coords_per_tensor = 0;  // 0 = every coordinate
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes that crossed a ReLU kink
  bool passed = true;
};

// Central differences against `analytic`, perturbing `params` in place (and
// restoring them). Probes whose +/- evaluations change the activation pattern
// are skipped and replaced by another coordinate when sampling.
inline GradCheckReport grad_check(const std::function<LossEval()>& eval, const std::vector<ParamView>& params,
                                  const std::vector<ParamView>& analytic, const GradCheckOptions& opt = {}) {
  if (params.size() != analytic.size()) throw ShapeError("grad_check: params/analytic count mismatch");
  GradCheckReport rep;
  Rng rng(mix_seed(opt.seed, 0x6C));
  const LossEval base = eval();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& pv = params[k];
    if (pv.data.size() != analytic[k].data.size()) throw ShapeError("grad_check: size mismatch for " + pv.name);
    const std::size_t n = pv.data.size();
    const bool all = opt.max_coords_per_tensor == 0 || opt.max_coords_per_tensor >= n;
    const std::size_t want = all ? n : opt.max_coords_per_tensor;
    std::size_t done = 0, attempts = 0;
    while (done < want && attempts < (all ? n : 20 * want)) {
      const std::size_t i = all ? attempts : static_cast<std::size_t>(rng.below(n));
      ++attempts;
      const double saved = pv.data[i];
      pv.data[i] = saved + opt.step;
      const LossEval plus = eval();
      pv.data[i] = saved - opt.step;
      const LossEval minus = eval();
      pv.data[i] = saved;
      if (plus.signature != base.signature || minus.signature != base.signature) {
        ++rep.skipped;
        if (all) ++done;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * opt.step);
      const double a = analytic[k].data[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
      ++rep.checked;
      ++done;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = pv.name;
        rep.worst_index = i;
      }
    }
  }
  rep.passed = rep.max_rel_error <= opt.tolerance && rep.checked > 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Tensor serialization (row-major arrays with explicit shapes)

inline nlohmann::json tensors_to_json(const std::vector<ParamView>& views) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : views) {
    arr.push_back({{"name", v.name},
                   {"shape", v.shape},
                   {"data", std::vector<double>(v.data.begin(), v.data.end())}});
  }
  return arr;
}

inline void tensors_from_json(const nlohmann::json& arr, const std::vector<ParamView>& views) {
  if (!arr.is_array() || arr.size() != views.size())
    throw ParseError("checkpoint: expected " + std::to_string(views.size()) + " tensors");
  for (std::size_t k = 0; k < views.size(); ++k) {
    const auto& t = arr[k];
    if (t.at("name").get<std::string>() != views[k].name)
      throw ParseError("checkpoint: tensor " + std::to_string(k) + " is '" + t.at("name").get<std::string>() +
                       "', expected '" + views[k].name + "'");
    if (t.at("shape").get<std::vector<Eigen::Index>>() != views[k].shape)
      throw ShapeError("checkpoint: shape mismatch for '" + views[k].name + "'");
    const auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != views[k].data.size()) throw ShapeError("checkpoint: size mismatch for '" + views[k].name + "'");
    std::copy(data.begin(), data.end(), views[k].data.begin());
  }
}

inline nlohmann::json adam_to_json(const AdamState& st) {
  nlohmann::json j;
  j["lr"] = st.lr;
  j["weight_decay"] = st.weight_decay;
  j["beta1"] = st.beta1;
  j["beta2"] = st.beta2;
  j["eps"] = st.eps;
  j["step_count"] = st.step_count;
  j["first_moment"] = st.first_moment;
  j["second_moment"] = st.second_moment;
  return j;
}

inline AdamState adam_from_json(const nlohmann::json& j) {
  AdamState st;
  st.lr = j.at("lr").get<double>();
  st.weight_decay = j.at("weight_decay").get<double>();
  st.beta1 = j.at("beta1").get<double>();
  st.beta2 = j.at("beta2").get<double>();
  st.eps = j.at("eps").get<double>();
  st.step_count = j.at("step_count").get<std::uint64_t>();
  st.first_moment = j.at("first_moment").get<std::map<std::string, std::vector<double>>>();
  st.second_moment = j.at("second_moment").get<std::map<std::string, std::vector<double>>>();
  return st;
}

}  // namespace mastune
