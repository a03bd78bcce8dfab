#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "jfaa/focal_loss.hpp"
#include "jfaa/probe.hpp"

namespace jfaa {

/// Central finite-difference comparison for one tensor.
struct BlockCheck {
  std::string name;
  Eigen::Index elements = 0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||, kNormFloor)
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<BlockCheck> blocks;
  double tolerance = 0.0;
  double worst() const;
  bool passed() const { return worst() <= tolerance; }
};

inline constexpr double kNormFloor = 1e-8;

double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

struct ProbeCheckOptions {
  ProbeConfig probe{.d_model = 32, .n_blocks = 2, .n_heads = 4, .mlp_ratio = 4.0,
                    .n_verb = 5, .n_noun = 7, .n_action = 6, .seed = 11};
  Eigen::Index n_tokens = 6;
  double step = 1e-3;
  double tolerance = 1e-4;
  std::uint64_t seed = 5;
};

/// Every probe parameter, perturbed one at a time, at 64-bit precision.
GradCheckReport probe_gradient_check(const ProbeCheckOptions& options = {});

struct FocalCheckOptions {
  int trials = 50;
  Eigen::Index n_classes = 20;
  double step = 1e-6;
  double tolerance = 1e-6;
  std::uint64_t seed = 3;
};

/// Random logits in [-5, 5] with (alpha, gamma) drawn per trial.
GradCheckReport focal_gradient_check(const FocalCheckOptions& options = {});

}  // namespace jfaa
