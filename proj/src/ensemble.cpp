#include "jfaa/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "jfaa/error.hpp"
#include "jfaa/metrics.hpp"
#include "jfaa/probe.hpp"

namespace jfaa {

LabelVocabulary LabelVocabulary::from_records(const std::vector<AnnotationRecord>& records) {
  std::set<int> verbs, nouns;
  std::set<VerbNounPair> actions;
  for (const auto& r : records) {
    verbs.insert(r.verb_class);
    nouns.insert(r.noun_class);
    actions.insert({r.verb_class, r.noun_class});
  }
  return {{verbs.begin(), verbs.end()}, {nouns.begin(), nouns.end()},
          {actions.begin(), actions.end()}};
}

namespace {

template <class T>
std::optional<Eigen::Index> sorted_index(const std::vector<T>& v, const T& x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) return std::nullopt;
  return static_cast<Eigen::Index>(it - v.begin());
}

}  // namespace

std::optional<Eigen::Index> LabelVocabulary::verb_index(int verb) const {
  return sorted_index(verbs, verb);
}
std::optional<Eigen::Index> LabelVocabulary::noun_index(int noun) const {
  return sorted_index(nouns, noun);
}
std::optional<Eigen::Index> LabelVocabulary::action_index(const VerbNounPair& pair) const {
  return sorted_index(actions, pair);
}

Eigen::VectorXd expand_scores(const Eigen::VectorXd& raw, std::span<const int> mapping,
                              Eigen::Index official_size) {
  if (static_cast<Eigen::Index>(mapping.size()) != raw.size())
    throw DataError("expand_scores: mapping length differs from score length");
  if (raw.size() == 0) throw DataError("expand_scores: no scores");
  std::vector<bool> used(static_cast<std::size_t>(official_size), false);
  Eigen::VectorXd out = Eigen::VectorXd::Constant(official_size, raw.minCoeff() - 1.0);
  for (std::size_t i = 0; i < mapping.size(); ++i) {
    const int target = mapping[i];
    if (target < 0 || target >= official_size)
      throw DataError("expand_scores: target id " + std::to_string(target) + " out of range");
    if (used[static_cast<std::size_t>(target)])
      throw DataError("expand_scores: duplicate mapping target " + std::to_string(target));
    used[static_cast<std::size_t>(target)] = true;
    out[target] = raw[static_cast<Eigen::Index>(i)];
  }
  return out;
}

ActionScores top100_action_pairs(const Eigen::VectorXd& action_scores,
                                 std::span<const VerbNounPair> vocabulary,
                                 const Eigen::VectorXd& expanded_verb,
                                 const Eigen::VectorXd& expanded_noun, std::size_t count) {
  if (vocabulary.empty()) throw DataError("top100_action_pairs: empty pair vocabulary");
  if (static_cast<Eigen::Index>(vocabulary.size()) != action_scores.size())
    throw DataError("top100_action_pairs: score length differs from vocabulary");

  ActionScores native;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    if (!native.emplace(vocabulary[i], action_scores[static_cast<Eigen::Index>(i)]).second)
      throw DataError("top100_action_pairs: duplicate vocabulary pair");
  }
  auto ranked = ranked_pairs(native);
  ActionScores out;
  for (std::size_t i = 0; i < std::min(count, ranked.size()); ++i) out.insert(ranked[i]);
  if (out.size() == count) return out;

  // Pad with verb x noun combinations ranked by summed expanded score.
  struct Combo {
    double sum;
    VerbNounPair pair;
  };
  std::vector<Combo> combos;
  combos.reserve(static_cast<std::size_t>(expanded_verb.size() * expanded_noun.size()));
  for (int v = 0; v < expanded_verb.size(); ++v)
    for (int n = 0; n < expanded_noun.size(); ++n)
      if (!native.contains({v, n})) combos.push_back({expanded_verb[v] + expanded_noun[n], {v, n}});
  const std::size_t needed = std::min(count - out.size(), combos.size());
  const auto before = [](const Combo& a, const Combo& b) {
    return a.sum > b.sum || (a.sum == b.sum && a.pair < b.pair);
  };
  std::partial_sort(combos.begin(), combos.begin() + static_cast<std::ptrdiff_t>(needed),
                    combos.end(), before);
  const double native_floor = ranked.back().second - 1.0;
  for (std::size_t i = 0; i < needed; ++i) {
    // Padded pairs rank strictly below every native pair, in combo order.
    out.emplace(combos[i].pair, native_floor - (combos.front().sum - combos[i].sum));
  }
  return out;
}

Eigen::VectorXd normalize_scores(const Eigen::VectorXd& v, Normalization mode) {
  if (mode == Normalization::kNone || v.size() == 0) return v;
  Eigen::ArrayXd e = (v.array() - v.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

ActionScores normalize_scores(const ActionScores& scores, Normalization mode) {
  if (mode == Normalization::kNone || scores.empty()) return scores;
  Eigen::VectorXd v(static_cast<Eigen::Index>(scores.size()));
  Eigen::Index i = 0;
  for (const auto& [pair, s] : scores) v[i++] = s;
  v = normalize_scores(v, mode);
  ActionScores out;
  i = 0;
  for (const auto& [pair, s] : scores) out.emplace_hint(out.end(), pair, v[i++]);
  return out;
}

void EnsembleConfig::validate() const {
  for (Field f : kFields) {
    const auto& list = fields[f];
    if (list.empty()) throw ConfigError(std::string("ensemble: no candidates for ") + kFieldNames[f]);
    double total = 0.0;
    for (const auto& c : list) {
      if (!(c.weight >= 0.0)) throw ConfigError("ensemble: negative weight");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw ConfigError(std::string("ensemble: ") + kFieldNames[f] + " weights do not sum to 1");
  }
}

namespace {

const Candidate& find_candidate(const CandidatePool& pool, int id) {
  auto it = pool.find(id);
  if (it == pool.end()) throw DataError("ensemble: unknown candidate " + std::to_string(id));
  return it->second;
}

void check_coverage(const CandidatePool& pool) {
  if (pool.empty()) throw DataError("ensemble: empty candidate pool");
  const auto& ref = pool.begin()->second.scores;
  for (const auto& [id, c] : pool) {
    if (c.scores.size() != ref.size())
      throw DataError("ensemble: candidate " + std::to_string(id) + " covers a different instance set");
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (c.scores[i].narration_id != ref[i].narration_id)
        throw DataError("ensemble: candidate " + std::to_string(id) +
                        " covers a different instance set at " + ref[i].narration_id);
  }
}

/// Weighted sum of dense vectors; zero-weight members are skipped.
Eigen::VectorXd blend(const std::vector<const Eigen::VectorXd*>& members,
                      const std::vector<double>& weights) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(members.front()->size());
  for (std::size_t k = 0; k < members.size(); ++k)
    if (weights[k] != 0.0) out += weights[k] * *members[k];
  return out;
}

ActionScores blend(const std::vector<const ActionScores*>& members,
                   const std::vector<double>& weights) {
  ActionScores out;
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (weights[k] == 0.0) continue;
    for (const auto& [pair, s] : *members[k]) out[pair] += weights[k] * s;
  }
  return out;
}

ActionScores truncate_pairs(const ActionScores& scores, std::size_t count) {
  if (scores.size() <= count) return scores;
  auto ranked = ranked_pairs(scores);
  ranked.resize(count);
  return {ranked.begin(), ranked.end()};
}

/// Normalized copies of each candidate's scores, cached per (candidate, instance).
struct NormalizedPool {
  std::map<int, std::vector<ScoreSet>> sets;

  NormalizedPool(const CandidatePool& pool, Normalization mode) {
    for (const auto& [id, c] : pool) {
      auto& dst = sets[id];
      dst.reserve(c.scores.size());
      for (const auto& s : c.scores) {
        ScoreSet n;
        n.narration_id = s.narration_id;
        n.verb_scores = normalize_scores(s.verb_scores, mode);
        n.noun_scores = normalize_scores(s.noun_scores, mode);
        n.action_scores = normalize_scores(s.action_scores, mode);
        dst.push_back(std::move(n));
      }
    }
  }
};

void blend_field(const NormalizedPool& norm, Field field, const std::vector<int>& ids,
                 const std::vector<double>& weights, std::vector<ScoreSet>& out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (field == kAction) {
      std::vector<const ActionScores*> members;
      for (int id : ids) members.push_back(&norm.sets.at(id)[i].action_scores);
      out[i].action_scores = truncate_pairs(blend(members, weights), kEmittedActionPairs);
    } else {
      std::vector<const Eigen::VectorXd*> members;
      for (int id : ids) {
        const auto& s = norm.sets.at(id)[i];
        members.push_back(field == kVerb ? &s.verb_scores : &s.noun_scores);
      }
      (field == kVerb ? out[i].verb_scores : out[i].noun_scores) = blend(members, weights);
    }
  }
}

std::vector<ScoreSet> empty_like(const Candidate& ref) {
  std::vector<ScoreSet> out(ref.scores.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].narration_id = ref.scores[i].narration_id;
  return out;
}

}  // namespace

std::vector<ScoreSet> field_ensemble(const CandidatePool& candidates, const EnsembleConfig& cfg) {
  cfg.validate();
  check_coverage(candidates);
  for (Field f : kFields)
    for (const auto& c : cfg.fields[f]) find_candidate(candidates, c.candidate_id);
  const NormalizedPool norm(candidates, cfg.normalization);
  auto out = empty_like(candidates.begin()->second);
  for (Field f : kFields) {
    std::vector<int> ids;
    std::vector<double> weights;
    for (const auto& c : cfg.fields[f]) {
      ids.push_back(c.candidate_id);
      weights.push_back(c.weight);
    }
    blend_field(norm, f, ids, weights, out);
  }
  return out;
}

std::vector<std::vector<int>> simplex_grid(std::size_t n_candidates, int resolution) {
  std::vector<std::vector<int>> out;
  if (n_candidates == 0 || resolution < 1) return out;
  std::vector<int> current(n_candidates, 0);
  // Depth-first, larger leading counts first.
  const auto recurse = [&](auto&& self, std::size_t pos, int remaining) -> void {
    if (pos + 1 == n_candidates) {
      current[pos] = remaining;
      out.push_back(current);
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      current[pos] = k;
      self(self, pos + 1, remaining - k);
    }
  };
  recurse(recurse, 0, resolution);
  return out;
}

FitResult fit_ensemble_weights(const CandidatePool& candidates,
                               const std::array<std::vector<int>, 3>& field_candidates,
                               const std::vector<AnnotationRecord>& labels,
                               const FitOptions& options) {
  check_coverage(candidates);
  const auto& ref = candidates.begin()->second.scores;
  if (ref.size() != labels.size()) throw DataError("fit_ensemble_weights: label count mismatch");
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (ref[i].narration_id != labels[i].narration_id)
      throw DataError("fit_ensemble_weights: label order mismatch at " + labels[i].narration_id);
  const int resolution = static_cast<int>(std::lround(1.0 / options.step));
  if (!(options.step > 0.0) || std::abs(resolution * options.step - 1.0) > 1e-9)
    throw ConfigError("fit_ensemble_weights: step must divide 1");

  const NormalizedPool norm(candidates, options.normalization);
  const std::vector<SubsetFlags> flags(labels.size());
  FitResult result;
  result.config.normalization = options.normalization;

  for (Field f : kFields) {
    const auto& ids = field_candidates[f];
    if (ids.empty()) throw ConfigError(std::string("no candidates for ") + kFieldNames[f]);
    for (int id : ids) find_candidate(candidates, id);
    const auto grid = simplex_grid(ids.size(), resolution);
    if (grid.empty()) throw ConfigError("fit_ensemble_weights: empty grid");

    auto scratch = empty_like(candidates.begin()->second);
    // Other fields are irrelevant to this field's score; fill them from the first candidate.
    for (std::size_t i = 0; i < scratch.size(); ++i) {
      const auto& s = norm.sets.at(ids.front())[i];
      scratch[i].verb_scores = s.verb_scores;
      scratch[i].noun_scores = s.noun_scores;
      scratch[i].action_scores = s.action_scores;
    }

    double best_score = -1.0;
    int best_nonzero = 0;
    std::vector<int> best;
    for (const auto& counts : grid) {
      std::vector<double> weights;
      int nonzero = 0;
      for (int c : counts) {
        weights.push_back(static_cast<double>(c) / resolution);
        nonzero += c > 0;
      }
      blend_field(norm, f, ids, weights, scratch);
      const double score = evaluate_fields(scratch, labels, flags).overall(f);
      // Grid order is descending-lexicographic, so the first of equals wins the last tie-break.
      if (score > best_score || (score == best_score && nonzero < best_nonzero)) {
        best_score = score;
        best_nonzero = nonzero;
        best = counts;
      }
    }
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (best[k] > 0)
        result.config.fields[f].push_back(
            {ids[k], static_cast<double>(best[k]) / resolution});
    result.fitted_mt5r[f] = best_score;
  }
  return result;
}

}  // namespace jfaa
