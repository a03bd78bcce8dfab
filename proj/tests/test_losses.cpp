#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jfaa/focal_loss.hpp"
#include "jfaa/gradcheck.hpp"

using namespace jfaa;

namespace {

// Direct transcription of the per-class formula in extended precision.
long double focal_oracle(const Eigen::VectorXd& logits, Eigen::Index target, std::optional<double> alpha,
                         double gamma) {
  long double total = 0.0L;
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(logits(j))));
    const bool pos = j == target;
    const long double pt = pos ? p : 1.0L - p;
    const long double at = alpha ? (pos ? *alpha : 1.0L - *alpha) : 1.0L;
    total += -at * std::pow(1.0L - pt, static_cast<long double>(gamma)) * std::log(pt);
  }
  return total / static_cast<long double>(logits.size());
}

Eigen::VectorXd uniform_logits(Rng& rng, Eigen::Index n, double lo = -5.0, double hi = 5.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

FocalConfig config(std::optional<double> alpha, double gamma) {
  FocalConfig c;
  c.alpha = alpha;
  c.gamma = gamma;
  return c;
}

}  // namespace

TEST(FocalLoss, SingleClassAtZero) {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(1);
  const auto r = sigmoid_focal_loss<double>(z, 0, config(0.25, 2.0));
  EXPECT_NEAR(r.loss, 0.25 * 0.25 * std::log(2.0), 1e-15);
  EXPECT_NEAR(r.loss, 0.0433217, 1e-7);
}

TEST(FocalLoss, GammaZeroIsCrossEntropy) {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(1);
  EXPECT_NEAR(sigmoid_focal_loss<double>(z, 0, config(std::nullopt, 0.0)).loss, std::log(2.0), 1e-15);

  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = uniform_logits(rng, 9, -20.0, 20.0);
    const Eigen::Index t = trial % 9;
    double bce = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double s = j == t ? x(j) : -x(j);
      bce += std::log1p(std::exp(-s));
    }
    bce /= 9.0;
    EXPECT_NEAR(sigmoid_focal_loss<double>(x, t, config(std::nullopt, 0.0)).loss, bce, 1e-12);
  }
}

TEST(FocalLoss, MatchesExtendedPrecisionOracle) {
  Rng rng(2);
  std::uniform_real_distribution<double> ua(0.0, 1.0), ug(0.0, 4.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto x = uniform_logits(rng, 13);
    const std::optional<double> alpha = trial % 3 == 0 ? std::nullopt : std::optional(ua(rng));
    const double gamma = ug(rng);
    const Eigen::Index t = trial % 13;
    const double got = sigmoid_focal_loss<double>(x, t, config(alpha, gamma)).loss;
    EXPECT_NEAR(got, static_cast<double>(focal_oracle(x, t, alpha, gamma)), 1e-13);
  }
}

TEST(FocalLoss, DecreasesAsTrueLogitGrows) {
  const auto cfg = config(0.25, 2.0);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(4, -1.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double z = -30.0; z <= 60.0; z += 0.25) {
    x(2) = z;
    const double l = sigmoid_focal_loss<double>(x, 2, cfg).loss;
    ASSERT_LE(l, prev) << z;
    prev = l;
  }
  Eigen::VectorXd one(1);
  one(0) = 60.0;
  EXPECT_LT(sigmoid_focal_loss<double>(one, 0, cfg).loss, 1e-25);
}

TEST(FocalLoss, ExtremeLogitsStayFinite) {
  Eigen::VectorXd x(3);
  x << -800.0, 800.0, 0.0;
  for (Eigen::Index t = 0; t < 3; ++t) {
    const auto r = sigmoid_focal_loss<double>(x, t, config(0.25, 2.0));
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_TRUE(r.grad.allFinite());
  }
  const auto rf = sigmoid_focal_loss<float>(Eigen::VectorXf::Constant(5, 100.0f), 1, config(0.25, 2.0));
  EXPECT_TRUE(std::isfinite(rf.loss));
  EXPECT_TRUE(rf.grad.allFinite());
}

TEST(FocalLoss, Errors) {
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(sigmoid_focal_loss<double>(x, 3, FocalConfig{}), DataError);
  EXPECT_THROW(sigmoid_focal_loss<double>(x, -1, FocalConfig{}), DataError);
  Eigen::VectorXd bad = x;
  bad(1) = std::nan("");
  EXPECT_THROW(sigmoid_focal_loss<double>(bad, 0, FocalConfig{}), DataError);
  EXPECT_THROW(config(1.5, 2.0).validate(), ConfigError);
  EXPECT_THROW(config(0.25, -1.0).validate(), ConfigError);
}

TEST(FocalLoss, FiniteDifferenceGradient) {
  const auto report = focal_gradient_check();
  EXPECT_EQ(report.blocks.size(), 50u);
  EXPECT_LE(report.worst(), 1e-6);
}

TEST(FocalLoss, AlphaOneIgnoresNegatives) {
  // With alpha = 1 negatives carry no weight at all.
  Rng rng(4);
  const auto x = uniform_logits(rng, 6);
  const auto r = sigmoid_focal_loss<double>(x, 0, config(1.0, 2.0));
  for (Eigen::Index j = 1; j < 6; ++j) EXPECT_EQ(r.grad(j), 0.0);
  EXPECT_LT(r.grad(0), 0.0);
}

TEST(TotalLoss, WeightsAndMasking) {
  Rng rng(5);
  LogitTriple<double> l;
  l[kVerb] = uniform_logits(rng, 5);
  l[kNoun] = uniform_logits(rng, 7);
  l[kAction] = uniform_logits(rng, 4);
  FocalConfig cfg;
  const TripleLabel label{1, 3, 2};

  const auto verb = sigmoid_focal_loss<double>(l[kVerb], 1, cfg);
  const auto noun = sigmoid_focal_loss<double>(l[kNoun], 3, cfg);
  const auto action = sigmoid_focal_loss<double>(l[kAction], 2, cfg);
  const auto all = total_loss(l, label, cfg);
  EXPECT_NEAR(all.loss, verb.loss + noun.loss + action.loss, 1e-12);
  EXPECT_TRUE(all.grad[kNoun] == noun.grad);

  cfg.field_weights = {1.0, 0.0, 0.0};
  const auto only_verb = total_loss(l, label, cfg);
  EXPECT_EQ(only_verb.loss, verb.loss);
  EXPECT_TRUE(only_verb.grad[kNoun].isZero(0.0));

  cfg.field_weights = {1.0, 1.0, 1.0};
  const auto absent = total_loss(l, TripleLabel{1, 3, std::nullopt}, cfg);
  EXPECT_TRUE(absent.grad[kAction].isZero(0.0));
  EXPECT_EQ(absent.grad[kAction].size(), 4);
  EXPECT_NEAR(absent.loss, verb.loss + noun.loss, 1e-12);

  EXPECT_THROW(total_loss(l, TripleLabel{5, 0, std::nullopt}, cfg), DataError);
}
