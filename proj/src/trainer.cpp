#include "jfaa/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace jfaa {
namespace {

thread_local Phase t_phase = Phase::kIdle;
thread_local std::int64_t t_steps = 0;

TripleLabel label_for(const AnnotationRecord& r, const LabelVocabulary& vocab) {
  const auto verb = vocab.verb_index(r.verb_class);
  const auto noun = vocab.noun_index(r.noun_class);
  if (!verb || !noun)
    throw DataError(r.narration_id + ": label outside the training vocabulary");
  return {*verb, *noun, vocab.action_index({r.verb_class, r.noun_class})};
}

FeatureSequence fetch(const SplitContext& ctx, const AnnotationRecord& r, const ClipSpec& clip) {
  try {
    auto fs = (*ctx.provider)(r, clip);
    fs.validate();
    return fs;
  } catch (const std::exception& e) {
    throw DataError(r.narration_id + ": feature fetch failed: " + e.what());
  }
}

template <class S>
ForwardResult<S> forward(const FeatureSequence& fs, const ProbeParameters<S>& params) {
  const auto tokens = assemble_tokens(fs);
  const auto segs = segment_ids(fs);
  return probe_forward(tokens, std::span<const int>(segs), params);
}

}  // namespace

Phase current_phase() { return t_phase; }
std::int64_t optimizer_steps_taken() { return t_steps; }

PhaseScope::PhaseScope(Phase p) : previous_(t_phase) { t_phase = p; }
PhaseScope::~PhaseScope() { t_phase = previous_; }

void detail::note_optimizer_step() { ++t_steps; }

std::vector<HeadConfig> build_head_grid(const std::vector<double>& lrs,
                                        const std::vector<double>& wds, bool allow_any_size) {
  if (lrs.empty() || wds.empty()) throw ConfigError("head grid needs at least one lr and one wd");
  if (!allow_any_size && lrs.size() * wds.size() != kDefaultGridSize)
    throw ConfigError("head grid must contain " + std::to_string(kDefaultGridSize) +
                      " heads, got " + std::to_string(lrs.size() * wds.size()));
  std::set<std::pair<double, double>> seen;
  std::vector<HeadConfig> grid;
  for (double lr : lrs) {
    if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
    for (double wd : wds) {
      if (!(wd >= 0.0)) throw ConfigError("weight decays must be non-negative");
      if (!seen.insert({lr, wd}).second) throw ConfigError("duplicate (lr, wd) pair in head grid");
      grid.push_back({static_cast<int>(grid.size()), lr, wd});
    }
  }
  return grid;
}

EpochStats train_epoch(TrainState<TrainScalar>& state, const HeadConfig& head,
                       const FocalConfig& focal, const SplitContext& train, int batch_size) {
  using S = TrainScalar;
  if (!train.records || train.records->empty()) throw DataError("train_epoch: empty training set");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (current_phase() == Phase::kEvaluate) throw CheckError("train_epoch called during evaluation");
  PhaseScope phase(Phase::kTrain);

  const auto& records = *train.records;
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), state.rng);

  EpochStats stats;
  auto grads = ProbeParameters<S>::zeros(state.params.config);
  double batch_loss = 0.0, loss_sum = 0.0;
  int in_batch = 0;
  std::size_t counted = 0;

  const auto flush = [&] {
    if (in_batch == 0) return;
    const S scale = S(1) / static_cast<S>(in_batch);
    grads.for_each([&](const std::string&, Mat<S>& g) { g *= scale; });
    optimizer_step(state, grads, head);
    grads.for_each([](const std::string&, Mat<S>& g) { g.setZero(); });
    stats.batch_losses.push_back(batch_loss / in_batch);
    batch_loss = 0.0;
    in_batch = 0;
  };

  for (std::size_t idx : order) {
    const auto& r = records[idx];
    const double offset = perturb_anticipation(train.window, state.rng);
    ClipSpec clip;
    try {
      clip = resolve_clip(r, train.window, train.video_fps, offset);
    } catch (const UnsatisfiableWindow&) {
      ++stats.skipped;
      continue;
    }
    const auto features = fetch(train, r, clip);
    const auto fwd = forward(features, state.params);
    const auto loss = total_loss(fwd.logits, label_for(r, *train.vocab), focal);
    probe_backward(fwd.tape, state.params, loss.grad, grads);
    batch_loss += loss.loss;
    loss_sum += loss.loss;
    ++counted;
    if (++in_batch == batch_size) flush();
  }
  flush();
  stats.mean_loss = counted ? loss_sum / static_cast<double>(counted) : 0.0;
  ++state.epoch;
  return stats;
}

ScoreSet predict_scores(const ProbeParameters<TrainScalar>& params, const FeatureSequence& features,
                        const LabelVocabulary& vocab) {
  const auto fwd = forward(features, params);
  ScoreSet s;
  s.narration_id = features.narration_id;
  s.verb_scores = expand_scores(fwd.logits.verb().cast<double>(), vocab.verbs, kOfficialVerbClasses);
  s.noun_scores = expand_scores(fwd.logits.noun().cast<double>(), vocab.nouns, kOfficialNounClasses);
  s.action_scores = top100_action_pairs(fwd.logits.action().cast<double>(), vocab.actions,
                                        s.verb_scores, s.noun_scores);
  return s;
}

std::vector<ScoreSet> score_split(const ProbeParameters<TrainScalar>& params,
                                  const SplitContext& split) {
  PhaseScope phase(Phase::kEvaluate);
  std::vector<ScoreSet> out;
  out.reserve(split.records->size());
  for (const auto& r : *split.records) {
    const auto clip = resolve_clip(r, split.window, split.video_fps);
    auto s = predict_scores(params, fetch(split, r, clip), *split.vocab);
    s.narration_id = r.narration_id;
    out.push_back(std::move(s));
  }
  return out;
}

EpochCandidate evaluate_checkpoint(const ProbeParameters<TrainScalar>& params,
                                   const SplitContext& split,
                                   const std::vector<SubsetFlags>& flags, int epoch, int head_id) {
  if (!split.records || split.records->empty())
    throw DataError("evaluate_checkpoint: empty validation set");
  EpochCandidate c;
  c.epoch = epoch;
  c.head_id = head_id;
  c.scores = score_split(params, split);
  c.report = evaluate_fields(c.scores, *split.records, flags);
  return c;
}

const EpochCandidate& select_best_head(const std::vector<EpochCandidate>& candidates,
                                       SelectionCriterion criterion) {
  if (candidates.empty()) throw DataError("select_best_head: no candidates");
  const auto better = [&](const EpochCandidate& a, const EpochCandidate& b) {
    const double pa = a.report.overall(criterion.primary), pb = b.report.overall(criterion.primary);
    if (pa != pb) return pa > pb;
    const double va = a.report.overall(kVerb), vb = b.report.overall(kVerb);
    if (va != vb) return va > vb;
    return a.head_id < b.head_id;
  };
  const EpochCandidate* best = &candidates.front();
  for (const auto& c : candidates)
    if (better(c, *best)) best = &c;
  return *best;
}

std::array<int, 3> best_epoch_per_field(const std::vector<std::pair<int, MetricReport>>& epochs) {
  if (epochs.empty()) throw DataError("best_epoch_per_field: no epochs");
  std::array<int, 3> best{};
  for (Field f : kFields) {
    const std::pair<int, MetricReport>* winner = &epochs.front();
    for (const auto& e : epochs) {
      const double s = e.second.overall(f), w = winner->second.overall(f);
      if (s > w || (s == w && e.first < winner->first)) winner = &e;
    }
    best[f] = winner->first;
  }
  return best;
}

}  // namespace jfaa
