#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "jfaa/error.hpp"
#include "jfaa/score_set.hpp"
#include "jfaa/windows.hpp"

namespace jfaa {

/// Indices of the k largest scores, descending; ties resolve to the lower index.
template <class Derived>
std::vector<Eigen::Index> topk_indices(const Eigen::DenseBase<Derived>& scores, Eigen::Index k) {
  if (k < 1) throw ConfigError("topk_indices: k must be at least 1");
  const Eigen::Index n = scores.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const auto before = [&](Eigen::Index a, Eigen::Index b) {
    const auto sa = scores(a), sb = scores(b);
    return sa > sb || (sa == sb && a < b);
  };
  const auto m = static_cast<std::ptrdiff_t>(std::min(k, n));
  std::partial_sort(idx.begin(), idx.begin() + m, idx.end(), before);
  idx.resize(static_cast<std::size_t>(m));
  return idx;
}

struct ClassRecall {
  std::int64_t hits = 0;
  std::int64_t count = 0;
  double recall() const { return count ? static_cast<double>(hits) / static_cast<double>(count) : 0.0; }
  bool operator==(const ClassRecall&) const = default;
};

struct RecallResult {
  double mt5r = 0.0;  // percentage
  std::map<std::int64_t, ClassRecall> per_class;
};

/// Class-balanced recall: mean over classes present (under `mask`) of per-class hit rates.
RecallResult class_balanced_recall(const std::vector<std::int64_t>& labels,
                                   const std::vector<bool>& hits,
                                   const std::vector<bool>* mask = nullptr);

/// Mean Top-5 Recall over dense score rows (one instance per row).
RecallResult mean_top5_recall(const Eigen::MatrixXd& scores, const std::vector<std::int64_t>& labels,
                              const std::vector<bool>* mask = nullptr);

enum class Subset : int { kOverall = 0, kUnseen = 1, kTail = 2 };
inline constexpr std::array<const char*, 3> kSubsetNames = {"overall", "unseen", "tail"};

/// Class key used for action (verb, noun) pairs in per-class tables.
constexpr std::int64_t action_key(const VerbNounPair& p) {
  return static_cast<std::int64_t>(p.first) * kOfficialNounClasses + p.second;
}

struct MetricReport {
  /// [field][subset]; empty when the subset has no instances.
  std::array<std::array<std::optional<double>, 3>, 3> mt5r{};
  /// Overall per-class table per field.
  std::array<std::map<std::int64_t, ClassRecall>, 3> per_class;

  std::optional<double> get(int field, Subset s) const { return mt5r[field][static_cast<int>(s)]; }
  double overall(int field) const { return mt5r[field][0].value_or(0.0); }

  bool operator==(const MetricReport&) const = default;
};

/// Top-5 hit for each field of one instance.
std::array<bool, 3> top5_hits(const ScoreSet& s, const AnnotationRecord& r);

/// Verb, noun and action MT5R on the overall, unseen and tail subsets.
MetricReport evaluate_fields(const std::vector<ScoreSet>& scores,
                             const std::vector<AnnotationRecord>& records,
                             const std::vector<SubsetFlags>& flags);

/// Flat `{field}_{subset}_mt5r` JSON object; absent subsets serialize as null.
std::string metric_report_json(const MetricReport& report, bool include_per_class = false);

}  // namespace jfaa
