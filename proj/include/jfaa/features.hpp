#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "jfaa/windows.hpp"

namespace jfaa {

/// Token matrix, one token per row.
using TokenMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Frozen-backbone output for one clip: encoder tokens followed by predictor tokens.
struct FeatureSequence {
  std::string narration_id;
  TokenMatrix observed_tokens;
  TokenMatrix predicted_tokens;

  Eigen::Index d_model() const { return observed_tokens.cols(); }
  Eigen::Index n_obs() const { return observed_tokens.rows(); }
  Eigen::Index n_pred() const { return predicted_tokens.rows(); }

  /// Throws DataError on empty observed set, width mismatch or non-finite entries.
  void validate() const;
};

/// Rows of observed tokens, then rows of predicted tokens.
TokenMatrix assemble_tokens(const FeatureSequence& fs);

/// 0 for observed rows, 1 for predicted rows; aligned with assemble_tokens.
std::vector<int> segment_ids(const FeatureSequence& fs);

struct FeatureStoreHeader {
  static constexpr char kMagic[9] = "JFAAFEAT";
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kSize = 24;

  std::uint32_t version = kVersion;
  std::uint32_t d_model = 0;
  std::uint32_t n_obs = 0;
  std::uint32_t n_pred = 0;
};

void write_features(const FeatureSequence& fs, const std::filesystem::path& path);
FeatureSequence read_features(const std::filesystem::path& path);

/// Constants of the synthetic stand-in for the frozen backbone.
struct SynthConstants {
  static constexpr double kAnchorNorm = 1.0;
  static constexpr double kNoiseScale = 0.5;
  /// Per-token noise vectors are truncated to this multiple of kNoiseScale.
  static constexpr double kNoiseClip = 6.0;
};

/// Unit-norm class anchor for a (verb, noun) label, derived only from (seed, label).
Eigen::VectorXf class_anchor(int verb, int noun, Eigen::Index d_model, std::uint64_t seed);

/// Deterministic tokens: noise + separability * class_anchor(label).
/// `noise_variant` selects an alternative noise draw for the same instance.
FeatureSequence synth_features(const std::string& narration_id, std::pair<int, int> label,
                               Eigen::Index d_model, Eigen::Index n_obs, Eigen::Index n_pred,
                               std::uint64_t seed, double separability,
                               std::uint64_t noise_variant = 0);

/// Source of backbone features for a resolved clip.
using FeatureProvider =
    std::function<FeatureSequence(const AnnotationRecord&, const ClipSpec&)>;

struct SynthProviderOptions {
  Eigen::Index d_model = 64;
  Eigen::Index n_obs = 16;
  Eigen::Index n_pred = 8;
  std::uint64_t seed = 0;
  double separability = 1.0;
  /// Mix the first sampled frame index into the noise draw.
  bool vary_with_clip = true;
};

FeatureProvider make_synthetic_provider(SynthProviderOptions options);

/// Reads `<dir>/<narration_id>.feat`; the clip schedule is not consulted.
FeatureProvider make_file_provider(std::filesystem::path dir);

}  // namespace jfaa
