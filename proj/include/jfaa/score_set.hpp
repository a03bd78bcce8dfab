#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "jfaa/windows.hpp"

namespace jfaa {

inline constexpr std::size_t kEmittedActionPairs = 100;

using ActionScores = std::map<VerbNounPair, double>;

/// Per-instance scores in the official label spaces.
struct ScoreSet {
  std::string narration_id;
  Eigen::VectorXd verb_scores;
  Eigen::VectorXd noun_scores;
  ActionScores action_scores;

  bool operator==(const ScoreSet& o) const {
    return narration_id == o.narration_id && verb_scores == o.verb_scores &&
           noun_scores == o.noun_scores && action_scores == o.action_scores;
  }
};

/// Pairs sorted by descending score, ties by ascending (verb, noun).
std::vector<std::pair<VerbNounPair, double>> ranked_pairs(const ActionScores& scores);

}  // namespace jfaa
