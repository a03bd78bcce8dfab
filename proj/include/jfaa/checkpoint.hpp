#pragma once

#include <filesystem>
#include <vector>

#include "jfaa/probe.hpp"
#include "jfaa/score_set.hpp"
#include "jfaa/tensor_file.hpp"

namespace jfaa {

/// Checkpoint = "config" text block (key=value lines) followed by one block per
/// parameter tensor, named as in ProbeParameters::for_each.
void save_checkpoint(const ProbeParameters<float>& params, const std::filesystem::path& path);
void save_checkpoint(const ProbeParameters<double>& params, const std::filesystem::path& path);

ProbeConfig read_checkpoint_config(const TensorFile& file);

template <class S>
ProbeParameters<S> load_checkpoint(const std::filesystem::path& path) {
  const auto file = TensorFile::load(path);
  auto params = ProbeParameters<S>::zeros(read_checkpoint_config(file));
  params.for_each([&](const std::string& name, Mat<S>& m) {
    const auto& block = file.at(name);
    if (static_cast<Eigen::Index>(block.rows) != m.rows() ||
        static_cast<Eigen::Index>(block.cols) != m.cols())
      throw DataError(path.string() + ": block '" + name + "' has the wrong shape");
    m = block.to_matrix<S>();
  });
  return params;
}

/// Candidate score file: narration ids, dense verb/noun rows and a per-instance
/// action pair table (offsets, pair keys, scores).
void write_score_file(const std::vector<ScoreSet>& scores, const std::filesystem::path& path);
std::vector<ScoreSet> read_score_file(const std::filesystem::path& path);

}  // namespace jfaa
