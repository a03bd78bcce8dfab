#pragma once

#include <Eigen/Core>
#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "jfaa/score_set.hpp"
#include "jfaa/windows.hpp"

namespace jfaa {

/// Classes observed in the training split; probe outputs index into these lists.
struct LabelVocabulary {
  std::vector<int> verbs;                 // ascending official verb ids
  std::vector<int> nouns;                 // ascending official noun ids
  std::vector<VerbNounPair> actions;      // ascending (verb, noun) pairs

  static LabelVocabulary from_records(const std::vector<AnnotationRecord>& records);

  std::optional<Eigen::Index> verb_index(int verb) const;
  std::optional<Eigen::Index> noun_index(int noun) const;
  std::optional<Eigen::Index> action_index(const VerbNounPair& pair) const;
};

/// Scatters observed-class scores into an official-size vector. Unmapped
/// positions receive min(raw) - 1.
Eigen::VectorXd expand_scores(const Eigen::VectorXd& raw, std::span<const int> mapping,
                              Eigen::Index official_size);

/// The `count` best pairs of the vocabulary. Short vocabularies are padded with
/// the best remaining verb x noun combinations by summed expanded score.
ActionScores top100_action_pairs(const Eigen::VectorXd& action_scores,
                                 std::span<const VerbNounPair> vocabulary,
                                 const Eigen::VectorXd& expanded_verb,
                                 const Eigen::VectorXd& expanded_noun,
                                 std::size_t count = kEmittedActionPairs);

enum class Normalization { kSoftmax, kNone };

Eigen::VectorXd normalize_scores(const Eigen::VectorXd& v, Normalization mode);
ActionScores normalize_scores(const ActionScores& scores, Normalization mode);

struct WeightedCandidate {
  int candidate_id = 0;
  double weight = 0.0;
  bool operator==(const WeightedCandidate&) const = default;
};

struct EnsembleConfig {
  std::array<std::vector<WeightedCandidate>, 3> fields;
  Normalization normalization = Normalization::kSoftmax;

  void validate() const;
  bool operator==(const EnsembleConfig&) const = default;
};

/// Per-instance score sets of one candidate (one selected epoch), ordered by instance.
struct Candidate {
  int id = 0;
  std::vector<ScoreSet> scores;
};

using CandidatePool = std::map<int, Candidate>;

/// Weighted per-field blend of normalized candidate scores.
std::vector<ScoreSet> field_ensemble(const CandidatePool& candidates, const EnsembleConfig& cfg);

struct FitOptions {
  double step = 0.1;
  Normalization normalization = Normalization::kSoftmax;
};

struct FitResult {
  EnsembleConfig config;
  std::array<double, 3> fitted_mt5r{};  // overall, tuning split
};

/// Exhaustive per-field simplex-grid search maximizing overall validation MT5R.
FitResult fit_ensemble_weights(const CandidatePool& candidates,
                               const std::array<std::vector<int>, 3>& field_candidates,
                               const std::vector<AnnotationRecord>& labels,
                               const FitOptions& options = {});

/// All weight vectors on the grid {k * step} summing to one, in descending
/// lexicographic order (one-hot on the first candidate comes first).
std::vector<std::vector<int>> simplex_grid(std::size_t n_candidates, int resolution);

}  // namespace jfaa
