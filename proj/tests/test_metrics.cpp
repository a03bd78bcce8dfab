#include <gtest/gtest.h>

#include <json.hpp>
#include <random>

#include "jfaa/metrics.hpp"
#include "jfaa/probe.hpp"
#include "oracles/recall_oracle.hpp"

using namespace jfaa;

namespace {

Eigen::MatrixXd tied_scores(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  // Coarse quantisation forces frequent ties.
  std::uniform_int_distribution<int> level(0, 9);
  Eigen::MatrixXd s(rows, cols);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = level(rng) * 0.1;
  return s;
}

std::vector<std::int64_t> random_labels(Rng& rng, std::size_t n, int classes) {
  std::uniform_int_distribution<int> c(0, classes - 1);
  std::vector<std::int64_t> out(n);
  for (auto& l : out) l = c(rng);
  return out;
}

ScoreSet score_set(const std::string& id, int n_verb, int n_noun) {
  ScoreSet s;
  s.narration_id = id;
  s.verb_scores = Eigen::VectorXd::LinSpaced(n_verb, 0.0, -1.0);
  s.noun_scores = Eigen::VectorXd::LinSpaced(n_noun, 0.0, -1.0);
  return s;
}

}  // namespace

TEST(TopK, TieBreakAndBoundaries) {
  Eigen::VectorXd s(3);
  s << 0.1, 0.9, 0.9;
  EXPECT_EQ(topk_indices(s, 2), (std::vector<Eigen::Index>{1, 2}));
  EXPECT_EQ(topk_indices(s, 3), (std::vector<Eigen::Index>{1, 2, 0}));
  EXPECT_EQ(topk_indices(s, 10), (std::vector<Eigen::Index>{1, 2, 0}));
  EXPECT_THROW(topk_indices(s, 0), ConfigError);
}

TEST(TopK, MatchesFullSortOracle) {
  Rng rng(1);
  std::uniform_int_distribution<int> level(0, 5);
  for (int trial = 0; trial < 10000; ++trial) {
    Eigen::VectorXd s(12);
    for (auto& x : s) x = level(rng);
    std::vector<Eigen::Index> all(12);
    std::iota(all.begin(), all.end(), 0);
    std::stable_sort(all.begin(), all.end(), [&](auto a, auto b) { return s(a) > s(b); });
    all.resize(5);
    ASSERT_EQ(topk_indices(s, 5), all);
  }
}

TEST(MeanTop5Recall, PerfectPredictor) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(4, 10);
  const std::vector<std::int64_t> labels = {3, 9, 3, 0};
  for (int i = 0; i < 4; ++i) s(i, labels[i]) = 1.0;
  EXPECT_EQ(mean_top5_recall(s, labels).mt5r, 100.0);
}

TEST(MeanTop5Recall, ThreeInstanceFixture) {
  // Class 0: one hit, one miss. Class 1: one hit.
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 8);
  s.row(0) << 1, 0, 0, 0, 0, 0, 0, 0;
  s.row(1) << -1, 1, 1, 1, 1, 1, 0, 0;
  s.row(2) << 0, 1, 0, 0, 0, 0, 0, 0;
  const auto r = mean_top5_recall(s, {0, 0, 1});
  EXPECT_DOUBLE_EQ(r.mt5r, 75.0);
  EXPECT_EQ(r.per_class.at(0), (ClassRecall{1, 2}));
  EXPECT_EQ(r.per_class.at(1), (ClassRecall{1, 1}));
}

TEST(MeanTop5Recall, ClassBalancedNotInstanceBalanced) {
  // Class 0 has 9 perfect instances, class 1 a single miss.
  const std::vector<std::int64_t> labels = {0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  std::vector<bool> hits(10, true);
  hits[9] = false;
  EXPECT_DOUBLE_EQ(class_balanced_recall(labels, hits).mt5r, 50.0);
}

TEST(MeanTop5Recall, MatchesBruteForceOracleWithTies) {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = tied_scores(rng, 1000, 50);
    const auto labels = random_labels(rng, 1000, 50);
    EXPECT_EQ(mean_top5_recall(s, labels).mt5r, *oracle::mt5r(s, labels));
    std::vector<bool> mask(1000);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i * 7 + trial) % 3 == 0;
    EXPECT_EQ(mean_top5_recall(s, labels, &mask).mt5r, *oracle::mt5r(s, labels, mask));
  }
}

TEST(MeanTop5Recall, MonotoneTransformInvariance) {
  Rng rng(8);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd s(300, 20);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = normal(rng);
  const auto labels = random_labels(rng, 300, 20);
  const double base = mean_top5_recall(s, labels).mt5r;
  EXPECT_EQ(mean_top5_recall(s.unaryExpr([](double x) { return std::exp(3 * x) - 7; }), labels).mt5r, base);
  EXPECT_EQ(mean_top5_recall(s.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); }), labels).mt5r,
            base);
}

TEST(MeanTop5Recall, NewClassOnlyAddsItsOwnTerm) {
  Rng rng(9);
  const auto s = tied_scores(rng, 200, 30);
  auto labels = random_labels(rng, 200, 25);
  const auto before = mean_top5_recall(s, labels);
  Eigen::MatrixXd grown(201, 30);
  grown.topRows(200) = s;
  grown.row(200).setZero();
  grown(200, 29) = 1.0;
  labels.push_back(29);
  const auto after = mean_top5_recall(grown, labels);
  for (const auto& [cls, c] : before.per_class) EXPECT_EQ(after.per_class.at(cls), c);
  const auto k = static_cast<double>(before.per_class.size());
  EXPECT_NEAR(after.mt5r, (before.mt5r * k + 100.0) / (k + 1), 1e-12);
}

TEST(MeanTop5Recall, Errors) {
  const Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 6);
  EXPECT_THROW(mean_top5_recall(s, {0}), DataError);
  const std::vector<bool> none(2, false);
  EXPECT_THROW(mean_top5_recall(s, {0, 1}, &none), DataError);
  EXPECT_THROW(mean_top5_recall(Eigen::MatrixXd(0, 6), {}), DataError);
}

TEST(RankedPairs, DescendingThenPairOrder) {
  const ActionScores m = {{{2, 1}, 0.5}, {{0, 9}, 0.5}, {{1, 1}, 0.9}, {{0, 3}, 0.1}};
  const auto r = ranked_pairs(m);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].first, VerbNounPair(1, 1));
  EXPECT_EQ(r[1].first, VerbNounPair(0, 9));
  EXPECT_EQ(r[2].first, VerbNounPair(2, 1));
  EXPECT_EQ(r[3].first, VerbNounPair(0, 3));
}

TEST(EvaluateFields, SingleInstanceAllHit) {
  auto s = score_set("a", 97, 300);
  s.verb_scores(4) = 5.0;
  s.noun_scores(200) = 5.0;
  s.action_scores = {{{4, 200}, 1.0}};
  const std::vector<AnnotationRecord> recs = {{"a", "v", "P01", 10, 11, 4, 200}};
  const auto report = evaluate_fields({s}, recs, {SubsetFlags{}});
  for (Field f : kFields) {
    EXPECT_EQ(report.get(f, Subset::kOverall), 100.0);
    EXPECT_FALSE(report.get(f, Subset::kUnseen).has_value());
    EXPECT_FALSE(report.get(f, Subset::kTail).has_value());
  }
  const auto j = nlohmann::json::parse(metric_report_json(report));
  EXPECT_TRUE(j["verb_unseen_mt5r"].is_null());
  EXPECT_EQ(j["action_overall_mt5r"].get<double>(), 100.0);
}

TEST(EvaluateFields, ActionNeedsExactPairInTopFive) {
  auto s = score_set("a", 10, 10);
  s.action_scores = {{{1, 2}, 0.9}, {{2, 1}, 0.8}, {{0, 0}, 0.7}, {{3, 3}, 0.6}, {{4, 4}, 0.5}, {{1, 1}, 0.4}};
  AnnotationRecord r{"a", "v", "P01", 10, 11, 1, 1};
  EXPECT_FALSE(top5_hits(s, r)[kAction]);  // both parts appear, but the pair ranks sixth
  EXPECT_TRUE(top5_hits(s, r)[kVerb]);
  s.action_scores[{1, 1}] = 0.5;  // ties with (4,4); the lower pair wins the fifth slot
  EXPECT_TRUE(top5_hits(s, r)[kAction]);
}

TEST(EvaluateFields, TwelveInstanceFixture) {
  // Hits are driven by putting the truth first or pushing it out of the top five.
  const std::vector<std::tuple<int, int, bool, bool, bool, bool, bool, bool, bool>> rows = {
      // verb noun hitV hitN hitA unseen tailV tailN tailA
      {0, 0, true, true, true, false, false, false, false},
      {0, 1, false, true, false, false, false, false, false},
      {1, 0, true, false, false, true, true, false, false},
      {1, 1, true, true, true, true, true, false, true},
      {2, 2, false, false, false, false, false, true, false},
      {2, 2, true, true, true, false, false, true, false},
      {3, 0, true, true, false, true, false, false, false},
      {3, 3, false, false, false, false, false, true, true},
      {0, 0, true, false, true, true, false, false, false},
      {4, 4, true, true, true, false, true, true, true},
      {4, 1, false, true, true, true, true, false, false},
      {0, 2, true, true, false, false, false, true, false},
  };
  std::vector<ScoreSet> scores;
  std::vector<AnnotationRecord> recs;
  std::vector<SubsetFlags> flags;
  std::array<std::vector<std::int64_t>, 3> labels;
  std::array<std::vector<bool>, 3> hits;
  std::vector<bool> unseen;
  std::array<std::vector<bool>, 3> tail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto [v, n, hv, hn, ha, un, tv, tn, ta] = rows[i];
    const std::string id = "x_" + std::to_string(i);
    ScoreSet s = score_set(id, 10, 10);
    // LinSpaced rows rank class 0 first; lift or bury the truth explicitly.
    s.verb_scores(v) = hv ? 10.0 : -10.0;
    s.noun_scores(n) = hn ? 10.0 : -10.0;
    for (int k = 0; k < 6; ++k) s.action_scores[{9, k}] = 1.0 - 0.1 * k;
    s.action_scores[{v, n}] = ha ? 5.0 : -5.0;
    scores.push_back(s);
    recs.push_back({id, "vid", un ? "P99" : "P01", 10, 11, v, n});
    flags.push_back({true, un, tv, tn, ta});
    labels[kVerb].push_back(v);
    labels[kNoun].push_back(n);
    labels[kAction].push_back(v * 300 + n);
    hits[kVerb].push_back(hv);
    hits[kNoun].push_back(hn);
    hits[kAction].push_back(ha);
    unseen.push_back(un);
    tail[kVerb].push_back(tv);
    tail[kNoun].push_back(tn);
    tail[kAction].push_back(ta);
  }
  // Hand-countable per-class recall with std::map, independent of the library helper.
  const auto cbr = [](const std::vector<std::int64_t>& l, const std::vector<bool>& h,
                      const std::vector<bool>& m) {
    std::map<std::int64_t, std::pair<double, double>> t;
    for (std::size_t i = 0; i < l.size(); ++i)
      if (m[i]) t[l[i]].first += h[i], t[l[i]].second += 1;
    double sum = 0;
    for (auto& [k, hc] : t) sum += hc.first / hc.second;
    return 100.0 * sum / static_cast<double>(t.size());
  };
  const auto report = evaluate_fields(scores, recs, flags);
  const std::vector<bool> all(rows.size(), true);
  for (Field f : kFields) {
    EXPECT_DOUBLE_EQ(*report.get(f, Subset::kOverall), cbr(labels[f], hits[f], all));
    EXPECT_DOUBLE_EQ(*report.get(f, Subset::kUnseen), cbr(labels[f], hits[f], unseen));
    EXPECT_DOUBLE_EQ(*report.get(f, Subset::kTail), cbr(labels[f], hits[f], tail[f]));
  }
  // Verb overall by hand: class 0 3/4, 1 2/2, 2 1/2, 3 1/2, 4 1/2.
  EXPECT_DOUBLE_EQ(*report.get(kVerb, Subset::kOverall), 100.0 * (0.75 + 1 + 0.5 + 0.5 + 0.5) / 5);

  auto swapped = scores;
  std::swap(swapped[0], swapped[1]);
  EXPECT_THROW(evaluate_fields(swapped, recs, flags), DataError);
}
