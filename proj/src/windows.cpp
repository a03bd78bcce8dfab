#include "jfaa/windows.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace jfaa {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <class T>
bool parse_number(const std::string& text, T& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

void WindowConfig::validate() const {
  if (!(anticipation_s > 0.0)) throw ConfigError("anticipation_s must be positive");
  if (!(observation_s > 0.0)) throw ConfigError("observation_s must be positive");
  if (n_frames < 1) throw ConfigError("n_frames must be at least 1");
  if (!(sample_fps > 0.0)) throw ConfigError("sample_fps must be positive");
  if (!(perturb_lo_s <= perturb_hi_s)) throw ConfigError("perturb_lo_s exceeds perturb_hi_s");
  if (!(perturb_lo_s > 0.0)) throw ConfigError("perturb_lo_s must be positive");
  if (n_frames / sample_fps > observation_s + 1e-9)
    throw ConfigError("n_frames / sample_fps exceeds observation_s");
}

std::vector<AnnotationRecord> parse_annotations(const std::filesystem::path& path,
                                                LabelSpace labels) {
  std::ifstream in(path);
  if (!in) throw DataError("annotation file not found: " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != kAnnotationHeader)
    throw DataError(path.string() + ": header must be '" + kAnnotationHeader + "'");

  std::vector<AnnotationRecord> records;
  std::unordered_set<std::string> seen;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto where = path.string() + " row " + std::to_string(row);
    auto cells = split_csv(line);
    if (cells.size() != 7) throw DataError(where + ": expected 7 columns");
    AnnotationRecord r;
    r.narration_id = cells[0];
    r.video_id = cells[1];
    r.participant_id = cells[2];
    if (r.narration_id.empty()) throw DataError(where + ": empty narration_id");
    if (!parse_number(cells[3], r.start_s) || !parse_number(cells[4], r.stop_s) ||
        !parse_number(cells[5], r.verb_class) || !parse_number(cells[6], r.noun_class))
      throw DataError(where + ": malformed number");
    if (!(r.start_s >= 0.0) || !(r.stop_s > r.start_s))
      throw DataError(where + ": require 0 <= start_s < stop_s");
    if (r.verb_class < 0 || r.verb_class >= labels.n_verb || r.noun_class < 0 ||
        r.noun_class >= labels.n_noun)
      throw DataError(where + ": class out of range");
    if (!seen.insert(r.narration_id).second)
      throw DataError(where + ": duplicate narration_id " + r.narration_id);
    records.push_back(std::move(r));
  }
  return records;
}

void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << kAnnotationHeader << '\n';
  char buf[64];
  const auto num = [&](double v) {
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  for (const auto& r : records) {
    out << r.narration_id << ',' << r.video_id << ',' << r.participant_id << ','
        << num(r.start_s) << ',' << num(r.stop_s) << ',' << r.verb_class << ','
        << r.noun_class << '\n';
  }
}

ObservationWindow observation_window(double start_s, const WindowConfig& cfg,
                                     std::optional<double> anticipation_override_s) {
  const double t_a = anticipation_override_s.value_or(cfg.anticipation_s);
  if (!(start_s >= 0.0)) throw DataError("start_s must be non-negative");
  if (!(t_a > 0.0)) throw ConfigError("anticipation time must be positive");

  const double raw_begin = start_s - (t_a + cfg.observation_s);
  const double raw_end = start_s - t_a;
  ObservationWindow w;
  w.begin_s = std::max(0.0, raw_begin);
  w.end_s = std::max(0.0, raw_end);
  w.clamped = raw_begin < 0.0;
  if (!(w.end_s > w.begin_s))
    throw UnsatisfiableWindow("segment starting at " + std::to_string(start_s) +
                              " s leaves no observable history");
  return w;
}

ClipSpec sample_frames(const ObservationWindow& window, const WindowConfig& cfg,
                       double video_fps) {
  if (!(video_fps > 0.0)) throw ConfigError("video_fps must be positive");
  if (!(window.end_s > window.begin_s)) throw DataError("empty observation window");

  ClipSpec clip;
  clip.window_begin_s = window.begin_s;
  clip.window_end_s = window.end_s;
  clip.clamped = window.clamped;
  clip.frame_timestamps_s.reserve(cfg.n_frames);
  clip.frame_indices.reserve(cfg.n_frames);
  // Latest frame sits exactly on window.end_s; earlier ones step back at sample_fps.
  const auto last_index = static_cast<std::int64_t>(std::floor(window.end_s * video_fps));
  for (int k = 0; k < cfg.n_frames; ++k) {
    double t = window.end_s - static_cast<double>(cfg.n_frames - 1 - k) / cfg.sample_fps;
    if (t < window.begin_s) t = window.begin_s;
    auto index = static_cast<std::int64_t>(std::floor(t * video_fps + 0.5));
    // A half-up round must not reach a frame past the window end.
    index = std::min(index, last_index);
    clip.frame_timestamps_s.push_back(t);
    clip.frame_indices.push_back(index);
  }
  return clip;
}

double perturb_anticipation(const WindowConfig& cfg, Rng& rng) {
  if (cfg.perturb_lo_s == cfg.perturb_hi_s) return cfg.perturb_lo_s;
  std::uniform_real_distribution<double> dist(cfg.perturb_lo_s, cfg.perturb_hi_s);
  return dist(rng);
}

ClipSpec resolve_clip(const AnnotationRecord& record, const WindowConfig& cfg, double video_fps,
                      std::optional<double> anticipation_override_s) {
  ObservationWindow w;
  try {
    w = observation_window(record.start_s, cfg, anticipation_override_s);
  } catch (const UnsatisfiableWindow& e) {
    throw UnsatisfiableWindow(record.narration_id + ": " + e.what());
  }
  auto clip = sample_frames(w, cfg, video_fps);
  clip.narration_id = record.narration_id;
  return clip;
}

std::vector<SubsetFlags> split_membership(const std::vector<AnnotationRecord>& records,
                                          const std::set<std::string>& unseen_participants,
                                          const TailClasses& tail) {
  std::vector<SubsetFlags> flags;
  flags.reserve(records.size());
  for (const auto& r : records) {
    SubsetFlags f;
    f.unseen = unseen_participants.contains(r.participant_id);
    f.tail_verb = tail.verbs.contains(r.verb_class);
    f.tail_noun = tail.nouns.contains(r.noun_class);
    f.tail_action = tail.actions.contains({r.verb_class, r.noun_class});
    flags.push_back(f);
  }
  return flags;
}

std::set<std::string> read_id_set(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  return {lines.begin(), lines.end()};
}

std::set<int> read_class_set(const std::filesystem::path& path) {
  std::set<int> out;
  for (const auto& line : read_lines(path)) {
    int v = 0;
    if (!parse_number(line, v)) throw DataError(path.string() + ": bad class id '" + line + "'");
    out.insert(v);
  }
  return out;
}

std::set<VerbNounPair> read_pair_set(const std::filesystem::path& path) {
  std::set<VerbNounPair> out;
  for (const auto& line : read_lines(path)) {
    auto cells = split_csv(line);
    VerbNounPair p;
    if (cells.size() != 2 || !parse_number(trim(cells[0]), p.first) ||
        !parse_number(trim(cells[1]), p.second))
      throw DataError(path.string() + ": bad pair '" + line + "'");
    out.insert(p);
  }
  return out;
}

}  // namespace jfaa
