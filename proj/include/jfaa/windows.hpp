#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "jfaa/error.hpp"
#include "jfaa/rng.hpp"

namespace jfaa {

inline constexpr int kOfficialVerbClasses = 97;
inline constexpr int kOfficialNounClasses = 300;

/// Verb/noun label-space sizes an annotation file is validated against.
struct LabelSpace {
  int n_verb = kOfficialVerbClasses;
  int n_noun = kOfficialNounClasses;
};

/// One labeled action segment [start_s, stop_s].
struct AnnotationRecord {
  std::string narration_id;
  std::string video_id;
  std::string participant_id;
  double start_s = 0.0;
  double stop_s = 0.0;
  int verb_class = 0;
  int noun_class = 0;

  bool operator==(const AnnotationRecord&) const = default;
};

struct WindowConfig {
  double anticipation_s = 1.0;
  double observation_s = 4.0;
  int n_frames = 32;
  double sample_fps = 8.0;
  double perturb_lo_s = 0.5;
  double perturb_hi_s = 1.5;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

struct ObservationWindow {
  double begin_s = 0.0;
  double end_s = 0.0;
  bool clamped = false;  // set when the zero clamp shortened the window
};

struct ClipSpec {
  std::string narration_id;
  double window_begin_s = 0.0;
  double window_end_s = 0.0;
  std::vector<double> frame_timestamps_s;
  std::vector<std::int64_t> frame_indices;
  bool clamped = false;

  bool operator==(const ClipSpec&) const = default;
};

/// Raised when a segment starts too early for any observable history.
class UnsatisfiableWindow : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr const char* kAnnotationHeader =
    "narration_id,video_id,participant_id,start_s,stop_s,verb_class,noun_class";

std::vector<AnnotationRecord> parse_annotations(const std::filesystem::path& path,
                                                LabelSpace labels = {});
void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationRecord>& records);

/// Pre-action interval [t_s - (T_a + T_o), t_s - T_a], clamped at zero.
ObservationWindow observation_window(double start_s, const WindowConfig& cfg,
                                     std::optional<double> anticipation_override_s = {});

/// Right-aligned fixed-rate frame schedule inside `window`.
ClipSpec sample_frames(const ObservationWindow& window, const WindowConfig& cfg,
                       double video_fps);

/// Training-time anticipation offset, uniform on [perturb_lo_s, perturb_hi_s].
double perturb_anticipation(const WindowConfig& cfg, Rng& rng);

/// Resolves the observation window and frame schedule for one record.
ClipSpec resolve_clip(const AnnotationRecord& record, const WindowConfig& cfg,
                      double video_fps, std::optional<double> anticipation_override_s = {});

using VerbNounPair = std::pair<int, int>;

struct TailClasses {
  std::set<int> verbs;
  std::set<int> nouns;
  std::set<VerbNounPair> actions;
};

struct SubsetFlags {
  bool overall = true;
  bool unseen = false;
  bool tail_verb = false;
  bool tail_noun = false;
  bool tail_action = false;

  bool operator==(const SubsetFlags&) const = default;
};

std::vector<SubsetFlags> split_membership(const std::vector<AnnotationRecord>& records,
                                          const std::set<std::string>& unseen_participants,
                                          const TailClasses& tail);

/// Plain-text id list, one id per line; blank lines and '#' comments ignored.
std::set<std::string> read_id_set(const std::filesystem::path& path);
std::set<int> read_class_set(const std::filesystem::path& path);
/// Lines of the form "verb,noun".
std::set<VerbNounPair> read_pair_set(const std::filesystem::path& path);

}  // namespace jfaa
