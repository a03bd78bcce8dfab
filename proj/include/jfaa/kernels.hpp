#pragma once

// Dense forward/backward kernels used by the attentive probe. Every backward
// routine accumulates (+=) into parameter gradients and returns the input gradient.

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <vector>

namespace jfaa {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

namespace kernels {

/// y = x w + b with b stored as a 1 x out row.
template <class S>
Mat<S> linear(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b) {
  Mat<S> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <class S>
Mat<S> linear_backward(const Mat<S>& dy, const Mat<S>& x, const Mat<S>& w, Mat<S>& dw,
                       Mat<S>& db) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  return dy * w.transpose();
}

template <class S>
struct LayerNormCache {
  Mat<S> xhat;
  Vec<S> rstd;
};

template <class S>
inline constexpr S kLayerNormEps = S(1e-6);

/// Per-row normalization over the feature axis.
template <class S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias,
                  LayerNormCache<S>& cache) {
  const auto n = static_cast<S>(x.cols());
  Vec<S> mean = x.rowwise().sum() / n;
  cache.xhat = x.colwise() - mean;
  Vec<S> var = cache.xhat.array().square().rowwise().sum() / n;
  cache.rstd = (var.array() + kLayerNormEps<S>).rsqrt();
  cache.xhat = cache.rstd.asDiagonal() * cache.xhat;
  Mat<S> y = cache.xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

template <class S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const LayerNormCache<S>& cache, const Mat<S>& gain,
                           Mat<S>& dgain, Mat<S>& dbias) {
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const auto n = static_cast<S>(dy.cols());
  Mat<S> dxhat = dy.array().rowwise() * gain.row(0).array();
  Vec<S> mean_dxhat = dxhat.rowwise().sum() / n;
  Vec<S> mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum().matrix() / n;
  Mat<S> dx = dxhat.colwise() - mean_dxhat;
  dx -= mean_dxhat_xhat.asDiagonal() * cache.xhat;
  return cache.rstd.asDiagonal() * dx;
}

/// Exact (erf-based) GELU.
template <class S>
Mat<S> gelu(const Mat<S>& x) {
  const S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
  return x.unaryExpr([inv_sqrt2](S v) { return S(0.5) * v * (S(1) + std::erf(v * inv_sqrt2)); });
}

template <class S>
Mat<S> gelu_backward(const Mat<S>& dy, const Mat<S>& x) {
  const S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
  const S inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<S> * inv_sqrt2;
  Mat<S> d = x.unaryExpr([=](S v) {
    const S cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
    const S pdf = inv_sqrt_2pi * std::exp(S(-0.5) * v * v);
    return cdf + v * pdf;
  });
  return dy.cwiseProduct(d);
}

/// Stable row-wise softmax.
template <class S>
Mat<S> softmax_rows(const Mat<S>& scores) {
  Mat<S> p = scores.colwise() - scores.rowwise().maxCoeff();
  p = p.array().exp();
  Vec<S> sums = p.rowwise().sum();
  return sums.cwiseInverse().asDiagonal() * p;
}

template <class S>
struct AttentionCache {
  Mat<S> query_in;  // rows attending
  Mat<S> kv_in;     // rows attended over
  Mat<S> q, k, v;   // projected
  Mat<S> mixed;     // concatenated head outputs, before the output projection
  std::vector<Mat<S>> probs;  // per head, [n_query x n_kv]
};

/// Projection set of one multi-head attention layer.
template <class S>
struct AttentionWeights {
  Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Multi-head scaled dot-product attention of `query_in` rows over `kv_in` rows.
template <class S>
Mat<S> attention(const Mat<S>& query_in, const Mat<S>& kv_in, const AttentionWeights<S>& w,
                 int n_heads, AttentionCache<S>& cache) {
  cache.query_in = query_in;
  cache.kv_in = kv_in;
  cache.q = linear(query_in, w.wq, w.bq);
  cache.k = linear(kv_in, w.wk, w.bk);
  cache.v = linear(kv_in, w.wv, w.bv);
  const Eigen::Index dh = cache.q.cols() / n_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  cache.mixed.resize(query_in.rows(), cache.q.cols());
  cache.probs.resize(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const auto cols = Eigen::seqN(h * dh, dh);
    Mat<S> scores = scale * (cache.q(Eigen::all, cols) * cache.k(Eigen::all, cols).transpose());
    auto& p = cache.probs[static_cast<std::size_t>(h)];
    p = softmax_rows(scores);
    cache.mixed(Eigen::all, cols).noalias() = p * cache.v(Eigen::all, cols);
  }
  return linear(cache.mixed, w.wo, w.bo);
}

/// Returns the gradient w.r.t. query_in; the kv_in gradient is written to `d_kv_in`.
template <class S>
Mat<S> attention_backward(const Mat<S>& dy, const AttentionCache<S>& cache,
                          const AttentionWeights<S>& w, AttentionWeights<S>& dw, int n_heads,
                          Mat<S>& d_kv_in) {
  Mat<S> dmixed = linear_backward(dy, cache.mixed, w.wo, dw.wo, dw.bo);
  const Eigen::Index dh = cache.q.cols() / n_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  Mat<S> dq(cache.q.rows(), cache.q.cols());
  Mat<S> dk(cache.k.rows(), cache.k.cols());
  Mat<S> dv(cache.v.rows(), cache.v.cols());
  for (int h = 0; h < n_heads; ++h) {
    const auto cols = Eigen::seqN(h * dh, dh);
    const auto& p = cache.probs[static_cast<std::size_t>(h)];
    Mat<S> dout = dmixed(Eigen::all, cols);
    Mat<S> dp = dout * cache.v(Eigen::all, cols).transpose();
    dv(Eigen::all, cols).noalias() = p.transpose() * dout;
    Vec<S> row_dot = (dp.array() * p.array()).rowwise().sum();
    Mat<S> dscores = p.array() * (dp.colwise() - row_dot).array();
    dscores *= scale;
    dq(Eigen::all, cols).noalias() = dscores * cache.k(Eigen::all, cols);
    dk(Eigen::all, cols).noalias() = dscores.transpose() * cache.q(Eigen::all, cols);
  }
  d_kv_in = linear_backward(dk, cache.kv_in, w.wk, dw.wk, dw.bk);
  d_kv_in += linear_backward(dv, cache.kv_in, w.wv, dw.wv, dw.bv);
  return linear_backward(dq, cache.query_in, w.wq, dw.wq, dw.bq);
}

}  // namespace kernels
}  // namespace jfaa
