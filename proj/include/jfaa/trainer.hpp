#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "jfaa/ensemble.hpp"
#include "jfaa/error.hpp"
#include "jfaa/features.hpp"
#include "jfaa/focal_loss.hpp"
#include "jfaa/metrics.hpp"
#include "jfaa/probe.hpp"
#include "jfaa/rng.hpp"
#include "jfaa/score_set.hpp"
#include "jfaa/windows.hpp"

namespace jfaa {

/// Scalar type used by training runs; tests instantiate the templates at double.
using TrainScalar = float;

inline constexpr std::size_t kDefaultGridSize = 20;

struct HeadConfig {
  int head_id = 0;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  bool operator==(const HeadConfig&) const = default;
};

/// Learning-rate-major Cartesian product of `lrs` x `wds`, ids 0..n-1.
std::vector<HeadConfig> build_head_grid(const std::vector<double>& lrs,
                                        const std::vector<double>& wds,
                                        bool allow_any_size = false);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected adaptive-moment step with decoupled weight decay on a
/// single tensor. `step` is the 1-based step count after this update.
template <class S>
void adam_update(Mat<S>& param, Mat<S>& m, Mat<S>& v, const Mat<S>& grad, std::int64_t step,
                 double lr, double wd, const AdamConfig& adam = {}) {
  const S b1 = static_cast<S>(adam.beta1), b2 = static_cast<S>(adam.beta2);
  m = b1 * m + (S(1) - b1) * grad;
  v = b2 * v + (S(1) - b2) * grad.cwiseProduct(grad);
  const S c1 = S(1) - static_cast<S>(std::pow(adam.beta1, static_cast<double>(step)));
  const S c2 = S(1) - static_cast<S>(std::pow(adam.beta2, static_cast<double>(step)));
  const S slr = static_cast<S>(lr), swd = static_cast<S>(wd), seps = static_cast<S>(adam.eps);
  param.array() -= slr * ((m.array() / c1) / ((v.array() / c2).sqrt() + seps)) + slr * swd * param.array();
}

template <class S>
struct TrainState {
  int epoch = 0;
  ProbeParameters<S> params;
  ProbeParameters<S> first_moment;
  ProbeParameters<S> second_moment;
  std::int64_t step = 0;
  Rng rng;

  static TrainState fresh(ProbeParameters<S> initial, std::uint64_t seed) {
    TrainState s;
    s.first_moment = ProbeParameters<S>::zeros(initial.config);
    s.second_moment = ProbeParameters<S>::zeros(initial.config);
    s.params = std::move(initial);
    s.rng.seed(seed);
    return s;
  }
};

/// Pipeline phase of the calling thread. Optimizer steps and anticipation
/// perturbation are refused during evaluation.
enum class Phase { kIdle, kTrain, kEvaluate };

Phase current_phase();
std::int64_t optimizer_steps_taken();  // per thread, monotone

class PhaseScope {
 public:
  explicit PhaseScope(Phase p);
  ~PhaseScope();
  PhaseScope(const PhaseScope&) = delete;
  PhaseScope& operator=(const PhaseScope&) = delete;

 private:
  Phase previous_;
};

namespace detail {
void note_optimizer_step();
}

template <class S>
void optimizer_step(TrainState<S>& state, const ProbeParameters<S>& grads, const HeadConfig& head,
                    const AdamConfig& adam = {}) {
  if (current_phase() == Phase::kEvaluate)
    throw CheckError("optimizer_step called during evaluation");
  if (!(grads.config == state.params.config)) throw CheckError("optimizer_step: shape mismatch");
  bool finite = true;
  grads.for_each([&](const std::string&, const Mat<S>& g) { finite = finite && g.allFinite(); });
  if (!finite) throw CheckError("optimizer_step: non-finite gradients");

  ++state.step;
  auto p = state.params.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  std::size_t i = 0;
  grads.for_each([&](const std::string&, const Mat<S>& g) {
    adam_update(*p[i].second, *m[i].second, *v[i].second, g, state.step, head.learning_rate,
                head.weight_decay, adam);
    ++i;
  });
  ++state.params.generation;
  detail::note_optimizer_step();
}

/// Everything a head needs to read one split.
struct SplitContext {
  const std::vector<AnnotationRecord>* records = nullptr;
  const LabelVocabulary* vocab = nullptr;
  const FeatureProvider* provider = nullptr;
  WindowConfig window;
  double video_fps = 50.0;
};

struct EpochStats {
  double mean_loss = 0.0;
  std::vector<double> batch_losses;
  std::size_t skipped = 0;  // instances without an observable window at the drawn offset
};

/// One seeded-shuffle pass with perturbed anticipation offsets and mini-batch updates.
EpochStats train_epoch(TrainState<TrainScalar>& state, const HeadConfig& head,
                       const FocalConfig& focal, const SplitContext& train, int batch_size);

/// Official-space scores for one clip.
ScoreSet predict_scores(const ProbeParameters<TrainScalar>& params, const FeatureSequence& features,
                        const LabelVocabulary& vocab);

struct EpochCandidate {
  int epoch = 0;
  int head_id = 0;
  MetricReport report;
  std::filesystem::path checkpoint;
  std::vector<ScoreSet> scores;
};

/// Fixed-gap, unperturbed scoring of every validation instance.
EpochCandidate evaluate_checkpoint(const ProbeParameters<TrainScalar>& params,
                                   const SplitContext& split,
                                   const std::vector<SubsetFlags>& flags, int epoch, int head_id);

/// Scores only (no metrics); used for unlabeled splits.
std::vector<ScoreSet> score_split(const ProbeParameters<TrainScalar>& params,
                                  const SplitContext& split);

struct SelectionCriterion {
  Field primary = kAction;
};

/// Highest primary-field overall MT5R; ties go to higher verb MT5R, then lower head id.
const EpochCandidate& select_best_head(const std::vector<EpochCandidate>& candidates,
                                       SelectionCriterion criterion = {});

/// Per-field epoch with the highest overall MT5R; ties go to the earliest epoch.
std::array<int, 3> best_epoch_per_field(const std::vector<std::pair<int, MetricReport>>& epochs);

}  // namespace jfaa
