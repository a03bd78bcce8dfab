#pragma once

#include <random>
#include <string>
#include <vector>

#include "jfaa/rng.hpp"
#include "jfaa/windows.hpp"

namespace jfaa::testing {

// Records cycling through every (verb, noun) combination, with start times well
// clear of the zero clamp.
inline std::vector<AnnotationRecord> grid_records(int n, int n_verbs, int n_nouns, std::uint64_t seed,
                                                  const std::string& prefix = "r") {
  Rng rng(seed);
  std::uniform_real_distribution<double> start(10.0, 500.0);
  std::vector<AnnotationRecord> out;
  for (int i = 0; i < n; ++i) {
    AnnotationRecord r;
    r.narration_id = prefix + std::to_string(i);
    r.participant_id = "P" + std::to_string(1 + i % 5);
    r.video_id = r.participant_id + "_1";
    r.start_s = start(rng);
    r.stop_s = r.start_s + 2.0;
    r.verb_class = i % n_verbs;
    r.noun_class = (i / n_verbs + i) % n_nouns;
    out.push_back(r);
  }
  return out;
}

}  // namespace jfaa::testing
