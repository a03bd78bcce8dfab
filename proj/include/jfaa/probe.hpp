#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jfaa/error.hpp"
#include "jfaa/kernels.hpp"
#include "jfaa/rng.hpp"

namespace jfaa {

/// Shape of one attentive probe head.
struct ProbeConfig {
  Eigen::Index d_model = 64;
  int n_blocks = 4;
  int n_heads = 16;
  double mlp_ratio = 4.0;
  Eigen::Index n_verb = 97;
  Eigen::Index n_noun = 300;
  Eigen::Index n_action = 1;
  std::uint64_t seed = 0;

  Eigen::Index hidden_dim() const {
    return static_cast<Eigen::Index>(std::lround(static_cast<double>(d_model) * mlp_ratio));
  }
  Eigen::Index head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
    if (n_blocks < 1) throw ConfigError("n_blocks must be at least 1");
    if (!(mlp_ratio > 0.0) || hidden_dim() < 1) throw ConfigError("mlp_ratio must be positive");
    if (n_verb < 1 || n_noun < 1 || n_action < 1)
      throw ConfigError("class counts must be positive");
  }

  bool operator==(const ProbeConfig&) const = default;
};

enum Field : int { kVerb = 0, kNoun = 1, kAction = 2 };
inline constexpr std::array<Field, 3> kFields = {kVerb, kNoun, kAction};
inline constexpr std::array<const char*, 3> kFieldNames = {"verb", "noun", "action"};

template <class S>
struct BlockParams {
  Mat<S> ln1_gain, ln1_bias;
  kernels::AttentionWeights<S> attn;
  Mat<S> ln2_gain, ln2_bias;
  Mat<S> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

/// Every learnable tensor of one probe head. Biases and gains are stored as 1 x n rows.
template <class S>
struct ProbeParameters {
  ProbeConfig config;
  Mat<S> segment_embedding;  // 2 x D: observed, predicted
  std::vector<BlockParams<S>> blocks;
  Mat<S> final_gain, final_bias;
  std::array<Mat<S>, 3> queries;  // one 1 x D query per field
  kernels::AttentionWeights<S> pool;
  std::array<Mat<S>, 3> classifier_weight;  // D x n_classes(field)
  std::array<Mat<S>, 3> classifier_bias;
  /// Bumped by every in-place update; a forward tape is only valid for one generation.
  std::uint64_t generation = 0;

  /// All-zero tensors shaped for `cfg`.
  static ProbeParameters zeros(const ProbeConfig& cfg);

  /// Visits (name, tensor) in a fixed order; the order defines checkpoint layout.
  template <class Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  std::vector<std::pair<std::string, Mat<S>*>> tensors() {
    std::vector<std::pair<std::string, Mat<S>*>> out;
    for_each([&](const std::string& name, Mat<S>& m) { out.emplace_back(name, &m); });
    return out;
  }

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for_each([&](const std::string&, const Mat<S>& m) { n += m.size(); });
    return n;
  }

  template <class T>
  ProbeParameters<T> cast() const;

 private:
  template <class Self, class Fn>
  static void visit(Self& self, Fn& fn);
};

template <class S>
template <class Self, class Fn>
void ProbeParameters<S>::visit(Self& self, Fn& fn) {
  const auto attention = [&fn](const std::string& prefix, auto& w) {
    fn(prefix + "wq", w.wq);
    fn(prefix + "bq", w.bq);
    fn(prefix + "wk", w.wk);
    fn(prefix + "bk", w.bk);
    fn(prefix + "wv", w.wv);
    fn(prefix + "bv", w.bv);
    fn(prefix + "wo", w.wo);
    fn(prefix + "bo", w.bo);
  };
  fn(std::string("segment_embedding"), self.segment_embedding);
  for (std::size_t i = 0; i < self.blocks.size(); ++i) {
    auto& b = self.blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    fn(p + "ln1.gain", b.ln1_gain);
    fn(p + "ln1.bias", b.ln1_bias);
    attention(p + "attn.", b.attn);
    fn(p + "ln2.gain", b.ln2_gain);
    fn(p + "ln2.bias", b.ln2_bias);
    fn(p + "mlp.w1", b.mlp_w1);
    fn(p + "mlp.b1", b.mlp_b1);
    fn(p + "mlp.w2", b.mlp_w2);
    fn(p + "mlp.b2", b.mlp_b2);
  }
  fn(std::string("final_norm.gain"), self.final_gain);
  fn(std::string("final_norm.bias"), self.final_bias);
  for (Field f : kFields) fn(std::string("pool.query_") + kFieldNames[f], self.queries[f]);
  attention("pool.", self.pool);
  for (Field f : kFields) {
    fn(std::string("head.") + kFieldNames[f] + ".weight", self.classifier_weight[f]);
    fn(std::string("head.") + kFieldNames[f] + ".bias", self.classifier_bias[f]);
  }
}

template <class S>
ProbeParameters<S> ProbeParameters<S>::zeros(const ProbeConfig& cfg) {
  cfg.validate();
  const auto d = cfg.d_model;
  const auto hid = cfg.hidden_dim();
  const auto attention = [d] {
    kernels::AttentionWeights<S> w;
    for (Mat<S>* m : {&w.wq, &w.wk, &w.wv, &w.wo}) *m = Mat<S>::Zero(d, d);
    for (Mat<S>* m : {&w.bq, &w.bk, &w.bv, &w.bo}) *m = Mat<S>::Zero(1, d);
    return w;
  };
  ProbeParameters p;
  p.config = cfg;
  p.segment_embedding = Mat<S>::Zero(2, d);
  p.blocks.resize(static_cast<std::size_t>(cfg.n_blocks));
  for (auto& b : p.blocks) {
    b.ln1_gain = b.ln1_bias = b.ln2_gain = b.ln2_bias = Mat<S>::Zero(1, d);
    b.attn = attention();
    b.mlp_w1 = Mat<S>::Zero(d, hid);
    b.mlp_b1 = Mat<S>::Zero(1, hid);
    b.mlp_w2 = Mat<S>::Zero(hid, d);
    b.mlp_b2 = Mat<S>::Zero(1, d);
  }
  p.final_gain = p.final_bias = Mat<S>::Zero(1, d);
  for (auto& q : p.queries) q = Mat<S>::Zero(1, d);
  p.pool = attention();
  const std::array<Eigen::Index, 3> classes = {cfg.n_verb, cfg.n_noun, cfg.n_action};
  for (Field f : kFields) {
    p.classifier_weight[f] = Mat<S>::Zero(d, classes[f]);
    p.classifier_bias[f] = Mat<S>::Zero(1, classes[f]);
  }
  return p;
}

template <class S>
template <class T>
ProbeParameters<T> ProbeParameters<S>::cast() const {
  auto out = ProbeParameters<T>::zeros(config);
  auto dst = out.tensors();
  std::size_t i = 0;
  for_each([&](const std::string&, const Mat<S>& m) { *dst[i++].second = m.template cast<T>(); });
  return out;
}

/// Seeded initialization: linear weights ~ N(0, 1/fan_in), gains 1, biases 0,
/// queries and segment embeddings ~ N(0, 0.02^2).
template <class S>
ProbeParameters<S> init_params(const ProbeConfig& cfg) {
  auto p = ProbeParameters<S>::zeros(cfg);
  Rng rng(derive_seed(cfg.seed, 0x696e6974ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto fill = [&](Mat<S>& m, double stddev) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<S>(stddev * normal(rng));
  };
  p.for_each([&](const std::string& name, Mat<S>& m) {
    const std::string leaf = name.substr(name.rfind('.') + 1);
    if (leaf == "gain") {
      m.setOnes();
    } else if (name == "segment_embedding" || name.starts_with("pool.query_")) {
      fill(m, 0.02);
    } else if (leaf != "bias" && leaf.front() != 'b') {
      fill(m, 1.0 / std::sqrt(static_cast<double>(m.rows())));
    }
  });
  return p;
}

template <class S>
struct LogitTriple {
  std::array<Vec<S>, 3> logits;

  Vec<S>& operator[](Field f) { return logits[f]; }
  const Vec<S>& operator[](Field f) const { return logits[f]; }
  Vec<S>& verb() { return logits[kVerb]; }
  Vec<S>& noun() { return logits[kNoun]; }
  Vec<S>& action() { return logits[kAction]; }
  const Vec<S>& verb() const { return logits[kVerb]; }
  const Vec<S>& noun() const { return logits[kNoun]; }
  const Vec<S>& action() const { return logits[kAction]; }
};

template <class S>
struct BlockTape {
  Mat<S> input;
  kernels::LayerNormCache<S> ln1;
  kernels::AttentionCache<S> attn;
  Mat<S> after_attn;
  kernels::LayerNormCache<S> ln2;
  Mat<S> ln2_out;
  Mat<S> hidden_pre;
  Mat<S> hidden_act;
};

/// Intermediates of one forward pass, consumed by probe_backward.
template <class S>
struct ProbeTape {
  const ProbeParameters<S>* params = nullptr;
  std::uint64_t generation = 0;
  std::vector<int> segment_ids;
  std::vector<BlockTape<S>> blocks;
  Mat<S> trunk_out;
  kernels::LayerNormCache<S> final_ln;
  Mat<S> normed;
  kernels::AttentionCache<S> pool;
  Mat<S> pooled;  // 3 x D, one row per field
};

template <class S>
Mat<S> stack_queries(const ProbeParameters<S>& params) {
  Mat<S> q(3, params.config.d_model);
  for (Field f : kFields) q.row(f) = params.queries[f].row(0);
  return q;
}

/// Cross-attention of the three task queries over `tokens`; one pooled row per query.
template <class S>
Mat<S> attentive_pool(const Mat<S>& tokens, const Mat<S>& queries,
                      const kernels::AttentionWeights<S>& weights, int n_heads,
                      kernels::AttentionCache<S>* cache = nullptr) {
  if (tokens.cols() != queries.cols() || weights.wq.rows() != tokens.cols())
    throw DataError("attentive_pool: shape mismatch");
  kernels::AttentionCache<S> local;
  return kernels::attention(queries, tokens, weights, n_heads, cache ? *cache : local);
}

template <class S>
struct ForwardResult {
  LogitTriple<S> logits;
  ProbeTape<S> tape;
};

template <class S, class Derived>
ForwardResult<S> probe_forward(const Eigen::MatrixBase<Derived>& tokens,
                               std::span<const int> segment_ids, const ProbeParameters<S>& params) {
  const auto& cfg = params.config;
  if (tokens.cols() != cfg.d_model)
    throw DataError("probe_forward: token width " + std::to_string(tokens.cols()) +
                    " != d_model " + std::to_string(cfg.d_model));
  if (tokens.rows() < 1) throw DataError("probe_forward: no tokens");
  if (static_cast<Eigen::Index>(segment_ids.size()) != tokens.rows())
    throw DataError("probe_forward: segment id count mismatch");
  if (!tokens.allFinite()) throw DataError("probe_forward: non-finite input");

  ForwardResult<S> out;
  auto& tape = out.tape;
  tape.params = &params;
  tape.generation = params.generation;
  tape.segment_ids.assign(segment_ids.begin(), segment_ids.end());

  Mat<S> x = tokens.template cast<S>();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int seg = segment_ids[static_cast<std::size_t>(i)];
    if (seg != 0 && seg != 1) throw DataError("probe_forward: segment id must be 0 or 1");
    x.row(i) += params.segment_embedding.row(seg);
  }

  tape.blocks.resize(params.blocks.size());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& w = params.blocks[b];
    auto& t = tape.blocks[b];
    t.input = x;
    Mat<S> a = kernels::layer_norm(x, w.ln1_gain, w.ln1_bias, t.ln1);
    x += kernels::attention(a, a, w.attn, cfg.n_heads, t.attn);
    t.after_attn = x;
    t.ln2_out = kernels::layer_norm(x, w.ln2_gain, w.ln2_bias, t.ln2);
    t.hidden_pre = kernels::linear(t.ln2_out, w.mlp_w1, w.mlp_b1);
    t.hidden_act = kernels::gelu(t.hidden_pre);
    x += kernels::linear(t.hidden_act, w.mlp_w2, w.mlp_b2);
  }
  tape.trunk_out = x;
  tape.normed = kernels::layer_norm(x, params.final_gain, params.final_bias, tape.final_ln);
  tape.pooled = attentive_pool(tape.normed, stack_queries(params), params.pool, cfg.n_heads,
                               &tape.pool);
  for (Field f : kFields) {
    out.logits[f] = (tape.pooled.row(f) * params.classifier_weight[f] +
                     params.classifier_bias[f].row(0))
                        .transpose();
  }
  return out;
}

/// Accumulates exact parameter gradients of a scalar loss into `grads`, given
/// the loss gradient on each logit vector.
template <class S>
void probe_backward(const ProbeTape<S>& tape, const ProbeParameters<S>& params,
                    const LogitTriple<S>& dlogits, ProbeParameters<S>& grads) {
  if (tape.params != &params || tape.generation != params.generation)
    throw CheckError("probe_backward: tape does not belong to these parameters");
  if (!(grads.config == params.config)) throw CheckError("probe_backward: gradient shape mismatch");
  const auto& cfg = params.config;

  Mat<S> dpooled(3, cfg.d_model);
  for (Field f : kFields) {
    if (dlogits[f].size() != params.classifier_bias[f].cols())
      throw CheckError("probe_backward: logit gradient length mismatch");
    grads.classifier_weight[f].noalias() += tape.pooled.row(f).transpose() * dlogits[f].transpose();
    grads.classifier_bias[f].row(0) += dlogits[f].transpose();
    dpooled.row(f) = (params.classifier_weight[f] * dlogits[f]).transpose();
  }

  Mat<S> dnormed;
  Mat<S> dqueries = kernels::attention_backward(dpooled, tape.pool, params.pool, grads.pool,
                                                cfg.n_heads, dnormed);
  for (Field f : kFields) grads.queries[f].row(0) += dqueries.row(f);

  Mat<S> dx = kernels::layer_norm_backward(dnormed, tape.final_ln, params.final_gain,
                                           grads.final_gain, grads.final_bias);
  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    const auto& w = params.blocks[b];
    auto& g = grads.blocks[b];
    const auto& t = tape.blocks[b];
    // x_out = after_attn + mlp(ln2(after_attn))
    Mat<S> dact = kernels::linear_backward(dx, t.hidden_act, w.mlp_w2, g.mlp_w2, g.mlp_b2);
    Mat<S> dpre = kernels::gelu_backward(dact, t.hidden_pre);
    Mat<S> dln2 = kernels::linear_backward(dpre, t.ln2_out, w.mlp_w1, g.mlp_w1, g.mlp_b1);
    dx += kernels::layer_norm_backward(dln2, t.ln2, w.ln2_gain, g.ln2_gain, g.ln2_bias);
    // after_attn = input + attn(ln1(input))
    Mat<S> dkv;
    Mat<S> da = kernels::attention_backward(dx, t.attn, w.attn, g.attn, cfg.n_heads, dkv);
    da += dkv;
    dx += kernels::layer_norm_backward(da, t.ln1, w.ln1_gain, g.ln1_gain, g.ln1_bias);
  }
  for (Eigen::Index i = 0; i < dx.rows(); ++i)
    grads.segment_embedding.row(tape.segment_ids[static_cast<std::size_t>(i)]) += dx.row(i);
}

template <class S>
ProbeParameters<S> probe_backward(const ProbeTape<S>& tape, const ProbeParameters<S>& params,
                                  const LogitTriple<S>& dlogits) {
  auto grads = ProbeParameters<S>::zeros(params.config);
  probe_backward(tape, params, dlogits, grads);
  return grads;
}

}  // namespace jfaa
