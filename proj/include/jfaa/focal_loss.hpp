#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <optional>

#include "jfaa/error.hpp"
#include "jfaa/kernels.hpp"
#include "jfaa/probe.hpp"

namespace jfaa {

struct FocalConfig {
  /// Positive-class weight; negatives get 1 - alpha. Disabled (both 1) when empty.
  std::optional<double> alpha = 0.25;
  double gamma = 2.0;
  std::array<double, 3> field_weights = {1.0, 1.0, 1.0};

  void validate() const {
    if (alpha && !(*alpha >= 0.0 && *alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
    for (double w : field_weights)
      if (!(w >= 0.0)) throw ConfigError("field weights must be non-negative");
  }
};

template <class S>
struct LossGrad {
  S loss = S(0);
  Vec<S> grad;
};

namespace detail {

/// log(1 + exp(z)) without overflow.
template <class S>
S softplus(S z) {
  return std::max(z, S(0)) + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace detail

/// One-vs-all sigmoid focal loss against a single positive class, averaged over classes.
template <class S, class Derived>
LossGrad<S> sigmoid_focal_loss(const Eigen::MatrixBase<Derived>& logits, Eigen::Index target,
                               const FocalConfig& cfg) {
  const Eigen::Index n = logits.size();
  if (target < 0 || target >= n) throw DataError("focal loss: target index out of range");
  if (!logits.allFinite()) throw DataError("focal loss: non-finite logits");
  const S gamma = static_cast<S>(cfg.gamma);
  const S a_pos = cfg.alpha ? static_cast<S>(*cfg.alpha) : S(1);
  const S a_neg = cfg.alpha ? S(1) - static_cast<S>(*cfg.alpha) : S(1);
  const S inv_n = S(1) / static_cast<S>(n);

  LossGrad<S> out;
  out.grad.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const S x = static_cast<S>(logits(j));
    const S log_p = -detail::softplus(-x);
    const S log_q = -detail::softplus(x);  // log(1 - p)
    const S p = std::exp(log_p);
    const S q = std::exp(log_q);
    S loss, grad;
    if (j == target) {
      const S mod = std::pow(q, gamma);
      loss = -a_pos * mod * log_p;
      grad = a_pos * (gamma * mod * p * log_p - mod * q);
    } else {
      const S mod = std::pow(p, gamma);
      loss = -a_neg * mod * log_q;
      grad = a_neg * (mod * p - gamma * mod * q * log_q);
    }
    out.loss += loss * inv_n;
    out.grad(j) = grad * inv_n;
  }
  return out;
}

/// Labels of one training instance; `action` is empty when the pair is outside
/// the training vocabulary.
struct TripleLabel {
  Eigen::Index verb = 0;
  Eigen::Index noun = 0;
  std::optional<Eigen::Index> action;
};

template <class S>
struct TripleLoss {
  S loss = S(0);
  std::array<S, 3> field_loss = {S(0), S(0), S(0)};
  LogitTriple<S> grad;
};

/// Weighted sum of the three field losses.
template <class S>
TripleLoss<S> total_loss(const LogitTriple<S>& logits, const TripleLabel& label,
                         const FocalConfig& cfg) {
  TripleLoss<S> out;
  const std::array<std::optional<Eigen::Index>, 3> targets = {label.verb, label.noun, label.action};
  for (Field f : kFields) {
    const S w = static_cast<S>(cfg.field_weights[f]);
    if (!targets[f] || w == S(0)) {
      out.grad[f] = Vec<S>::Zero(logits[f].size());
      continue;
    }
    auto lg = sigmoid_focal_loss<S>(logits[f], *targets[f], cfg);
    out.field_loss[f] = lg.loss;
    out.loss += w * lg.loss;
    out.grad[f] = w * lg.grad;
  }
  return out;
}

}  // namespace jfaa
