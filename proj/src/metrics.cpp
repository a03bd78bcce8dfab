#include "jfaa/metrics.hpp"

#include <json.hpp>

#include "jfaa/probe.hpp"

namespace jfaa {

std::vector<std::pair<VerbNounPair, double>> ranked_pairs(const ActionScores& scores) {
  std::vector<std::pair<VerbNounPair, double>> out(scores.begin(), scores.end());
  // Map iteration is already ascending by pair, so a stable sort keeps the tie order.
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

RecallResult class_balanced_recall(const std::vector<std::int64_t>& labels,
                                   const std::vector<bool>& hits, const std::vector<bool>* mask) {
  if (labels.size() != hits.size() || (mask && mask->size() != labels.size()))
    throw DataError("class_balanced_recall: length mismatch");
  RecallResult out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    auto& c = out.per_class[labels[i]];
    ++c.count;
    c.hits += hits[i] ? 1 : 0;
  }
  if (out.per_class.empty()) throw DataError("mean top-5 recall: empty instance set");
  double sum = 0.0;
  for (const auto& [cls, c] : out.per_class) sum += c.recall();
  out.mt5r = 100.0 * sum / static_cast<double>(out.per_class.size());
  return out;
}

RecallResult mean_top5_recall(const Eigen::MatrixXd& scores, const std::vector<std::int64_t>& labels,
                              const std::vector<bool>* mask) {
  if (scores.rows() != static_cast<Eigen::Index>(labels.size()))
    throw DataError("mean_top5_recall: score rows and labels differ in length");
  std::vector<bool> hits(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask && mask->size() == labels.size() && !(*mask)[i]) continue;
    const auto top = topk_indices(scores.row(static_cast<Eigen::Index>(i)), 5);
    hits[i] = std::find(top.begin(), top.end(), labels[i]) != top.end();
  }
  return class_balanced_recall(labels, hits, mask);
}

std::array<bool, 3> top5_hits(const ScoreSet& s, const AnnotationRecord& r) {
  const auto contains = [](const std::vector<Eigen::Index>& v, Eigen::Index x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };
  std::array<bool, 3> hit{};
  hit[kVerb] = contains(topk_indices(s.verb_scores, 5), r.verb_class);
  hit[kNoun] = contains(topk_indices(s.noun_scores, 5), r.noun_class);
  const auto ranked = ranked_pairs(s.action_scores);
  const VerbNounPair truth{r.verb_class, r.noun_class};
  for (std::size_t i = 0; i < std::min<std::size_t>(5, ranked.size()); ++i)
    if (ranked[i].first == truth) hit[kAction] = true;
  return hit;
}

MetricReport evaluate_fields(const std::vector<ScoreSet>& scores,
                             const std::vector<AnnotationRecord>& records,
                             const std::vector<SubsetFlags>& flags) {
  if (scores.size() != records.size() || flags.size() != records.size())
    throw DataError("evaluate_fields: scores, records and flags differ in length");
  const std::size_t n = records.size();
  std::array<std::vector<bool>, 3> hits;
  std::array<std::vector<std::int64_t>, 3> labels;
  for (auto& h : hits) h.resize(n);
  for (auto& l : labels) l.resize(n);
  std::vector<bool> unseen(n);
  std::array<std::vector<bool>, 3> tail;
  for (auto& t : tail) t.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    if (scores[i].narration_id != r.narration_id)
      throw DataError("evaluate_fields: id mismatch at " + std::to_string(i) + ": " +
                      scores[i].narration_id + " vs " + r.narration_id);
    const auto h = top5_hits(scores[i], r);
    for (Field f : kFields) hits[f][i] = h[f];
    labels[kVerb][i] = r.verb_class;
    labels[kNoun][i] = r.noun_class;
    labels[kAction][i] = action_key({r.verb_class, r.noun_class});
    unseen[i] = flags[i].unseen;
    tail[kVerb][i] = flags[i].tail_verb;
    tail[kNoun][i] = flags[i].tail_noun;
    tail[kAction][i] = flags[i].tail_action;
  }

  MetricReport report;
  const auto any = [](const std::vector<bool>& m) {
    return std::find(m.begin(), m.end(), true) != m.end();
  };
  for (Field f : kFields) {
    if (n == 0) break;
    auto overall = class_balanced_recall(labels[f], hits[f]);
    report.mt5r[f][0] = overall.mt5r;
    report.per_class[f] = std::move(overall.per_class);
    if (any(unseen)) report.mt5r[f][1] = class_balanced_recall(labels[f], hits[f], &unseen).mt5r;
    if (any(tail[f])) report.mt5r[f][2] = class_balanced_recall(labels[f], hits[f], &tail[f]).mt5r;
  }
  return report;
}

std::string metric_report_json(const MetricReport& report, bool include_per_class) {
  nlohmann::ordered_json j;
  for (Field f : kFields)
    for (int s = 0; s < 3; ++s) {
      const auto key = std::string(kFieldNames[f]) + "_" + kSubsetNames[s] + "_mt5r";
      if (report.mt5r[f][s])
        j[key] = *report.mt5r[f][s];
      else
        j[key] = nullptr;
    }
  if (include_per_class) {
    for (Field f : kFields) {
      auto& table = j[std::string(kFieldNames[f]) + "_per_class"];
      table = nlohmann::ordered_json::object();
      for (const auto& [cls, c] : report.per_class[f])
        table[std::to_string(cls)] = {{"hits", c.hits}, {"count", c.count}};
    }
  }
  return j.dump(2);
}

}  // namespace jfaa
