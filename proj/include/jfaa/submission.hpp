#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "jfaa/score_set.hpp"

namespace jfaa {

/// Challenge submission: per-instance verb (97), noun (300) and top-100 action scores.
struct Submission {
  std::string version = "0.2";
  std::string challenge = "action_anticipation";
  int sls_pt = 2;
  int sls_tl = 3;
  int sls_td = 4;
  std::vector<ScoreSet> results;
};

/// Throws CheckError naming the first violated rule.
void validate_score_set(const ScoreSet& s);
void validate_submission_json(const nlohmann::json& j);

nlohmann::json submission_to_json(const Submission& sub);
/// Results come back ordered by narration id.
Submission submission_from_json(const nlohmann::json& j);

/// Validates, then writes compact JSON. Nothing is written when validation fails.
void write_submission(const Submission& sub, const std::filesystem::path& path);
Submission read_submission(const std::filesystem::path& path);

}  // namespace jfaa
