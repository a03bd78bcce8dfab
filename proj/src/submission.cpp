#include "jfaa/submission.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "jfaa/error.hpp"
#include "jfaa/windows.hpp"

namespace jfaa {
namespace {

std::string pair_key(const VerbNounPair& p) {
  return std::to_string(p.first) + "," + std::to_string(p.second);
}

bool parse_int(std::string_view s, int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

void check(bool ok, const std::string& what) {
  if (!ok) throw CheckError("submission: " + what);
}

void validate_dense_field(const nlohmann::json& obj, int size, const std::string& where) {
  check(obj.is_object(), where + " must be an object");
  check(obj.size() == static_cast<std::size_t>(size),
        where + " must have exactly " + std::to_string(size) + " entries, found " +
            std::to_string(obj.size()));
  for (const auto& [key, value] : obj.items()) {
    int id = 0;
    check(parse_int(key, id) && id >= 0 && id < size && std::to_string(id) == key,
          where + " has invalid class key '" + key + "'");
    check(value.is_number() && std::isfinite(value.get<double>()),
          where + "[" + key + "] must be a finite number");
  }
}

}  // namespace

void validate_score_set(const ScoreSet& s) {
  const std::string where = "instance " + s.narration_id;
  check(!s.narration_id.empty(), "empty narration id");
  check(s.verb_scores.size() == kOfficialVerbClasses,
        where + ": verb scores must have " + std::to_string(kOfficialVerbClasses) + " entries");
  check(s.noun_scores.size() == kOfficialNounClasses,
        where + ": noun scores must have " + std::to_string(kOfficialNounClasses) + " entries");
  check(s.verb_scores.allFinite() && s.noun_scores.allFinite(), where + ": non-finite scores");
  check(s.action_scores.size() == kEmittedActionPairs,
        where + ": action map must have exactly " + std::to_string(kEmittedActionPairs) +
            " pairs, found " + std::to_string(s.action_scores.size()));
  for (const auto& [pair, v] : s.action_scores) {
    check(pair.first >= 0 && pair.first < kOfficialVerbClasses && pair.second >= 0 &&
              pair.second < kOfficialNounClasses,
          where + ": invalid action pair " + pair_key(pair));
    check(std::isfinite(v), where + ": non-finite action score");
  }
}

void validate_submission_json(const nlohmann::json& j) {
  check(j.is_object(), "top level must be an object");
  check(j.contains("version") && j["version"].is_string(), "missing string 'version'");
  check(j.contains("challenge") && j["challenge"] == "action_anticipation",
        "'challenge' must be \"action_anticipation\"");
  for (const char* key : {"sls_pt", "sls_tl", "sls_td"}) {
    check(j.contains(key) && j[key].is_number_integer(), std::string("'") + key + "' must be an integer");
    const int v = j[key].get<int>();
    check(v >= 0 && v <= 5, std::string("'") + key + "' must lie in [0, 5]");
  }
  check(j.contains("results") && j["results"].is_object(), "missing object 'results'");
  for (const auto& [id, entry] : j["results"].items()) {
    const std::string where = "results[" + id + "]";
    check(entry.is_object() && entry.size() == 3 && entry.contains("verb") &&
              entry.contains("noun") && entry.contains("action"),
          where + " must hold exactly 'verb', 'noun' and 'action'");
    validate_dense_field(entry["verb"], kOfficialVerbClasses, where + ".verb");
    validate_dense_field(entry["noun"], kOfficialNounClasses, where + ".noun");
    const auto& action = entry["action"];
    check(action.is_object(), where + ".action must be an object");
    check(action.size() == kEmittedActionPairs,
          where + ".action must have exactly " + std::to_string(kEmittedActionPairs) +
              " pairs, found " + std::to_string(action.size()));
    for (const auto& [key, value] : action.items()) {
      const auto comma = key.find(',');
      int v = -1, n = -1;
      check(comma != std::string::npos && parse_int(std::string_view(key).substr(0, comma), v) &&
                parse_int(std::string_view(key).substr(comma + 1), n) && v >= 0 &&
                v < kOfficialVerbClasses && n >= 0 && n < kOfficialNounClasses &&
                pair_key({v, n}) == key,
            where + ".action has invalid pair key '" + key + "'");
      check(value.is_number() && std::isfinite(value.get<double>()),
            where + ".action[" + key + "] must be a finite number");
    }
  }
}

nlohmann::json submission_to_json(const Submission& sub) {
  nlohmann::json j;
  j["version"] = sub.version;
  j["challenge"] = sub.challenge;
  j["sls_pt"] = sub.sls_pt;
  j["sls_tl"] = sub.sls_tl;
  j["sls_td"] = sub.sls_td;
  auto& results = j["results"] = nlohmann::json::object();
  for (const auto& s : sub.results) {
    check(!results.contains(s.narration_id), "duplicate narration id " + s.narration_id);
    auto& entry = results[s.narration_id];
    for (Eigen::Index c = 0; c < s.verb_scores.size(); ++c)
      entry["verb"][std::to_string(c)] = s.verb_scores[c];
    for (Eigen::Index c = 0; c < s.noun_scores.size(); ++c)
      entry["noun"][std::to_string(c)] = s.noun_scores[c];
    entry["action"] = nlohmann::json::object();
    for (const auto& [pair, v] : s.action_scores) entry["action"][pair_key(pair)] = v;
  }
  return j;
}

Submission submission_from_json(const nlohmann::json& j) {
  validate_submission_json(j);
  Submission sub;
  sub.version = j["version"].get<std::string>();
  sub.challenge = j["challenge"].get<std::string>();
  sub.sls_pt = j["sls_pt"].get<int>();
  sub.sls_tl = j["sls_tl"].get<int>();
  sub.sls_td = j["sls_td"].get<int>();
  for (const auto& [id, entry] : j["results"].items()) {
    ScoreSet s;
    s.narration_id = id;
    s.verb_scores.resize(kOfficialVerbClasses);
    s.noun_scores.resize(kOfficialNounClasses);
    for (const auto& [key, value] : entry["verb"].items()) s.verb_scores[std::stoi(key)] = value.get<double>();
    for (const auto& [key, value] : entry["noun"].items()) s.noun_scores[std::stoi(key)] = value.get<double>();
    for (const auto& [key, value] : entry["action"].items()) {
      const auto comma = key.find(',');
      s.action_scores.emplace(VerbNounPair{std::stoi(key.substr(0, comma)), std::stoi(key.substr(comma + 1))},
                              value.get<double>());
    }
    sub.results.push_back(std::move(s));
  }
  return sub;
}

void write_submission(const Submission& sub, const std::filesystem::path& path) {
  for (const auto& s : sub.results) validate_score_set(s);
  const auto j = submission_to_json(sub);
  validate_submission_json(j);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump() << '\n';
}

Submission read_submission(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("submission not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckError(std::string("submission: invalid JSON: ") + e.what());
  }
  return submission_from_json(j);
}

}  // namespace jfaa
