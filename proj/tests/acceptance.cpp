// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "jfaa/ensemble.hpp"
#include "jfaa/focal_loss.hpp"
#include "jfaa/gradcheck.hpp"
#include "jfaa/metrics.hpp"
#include "jfaa/pipeline.hpp"
#include "jfaa/submission.hpp"
#include "jfaa/trainer.hpp"
#include "oracles/recall_oracle.hpp"
#include "scratch_dir.hpp"

using namespace jfaa;
using jfaa::testing::ScratchDir;
using jfaa::testing::slurp;

namespace {

// Pinned thresholds.
constexpr double kWindowBudgetS = 1.0;
constexpr double kGradBudgetS = 30.0;
constexpr double kProbeGradTol = 1e-4;
constexpr double kFocalGradTol = 1e-6;
constexpr double kFocalBceTol = 1e-12;
constexpr double kOverfitTop1 = 0.95;
constexpr int kOverfitEpochs = 50;
constexpr double kOverfitBudgetS = 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::VectorXd normal_vector(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

ScoreSet random_score_set(Rng& rng, const std::string& id) {
  ScoreSet s;
  s.narration_id = id;
  s.verb_scores = normal_vector(rng, kOfficialVerbClasses);
  s.noun_scores = normal_vector(rng, kOfficialNounClasses);
  std::uniform_int_distribution<int> verb(0, 14), noun(0, 24);
  std::set<VerbNounPair> pairs;
  while (pairs.size() < 120) pairs.insert({verb(rng), noun(rng)});
  const std::vector<VerbNounPair> vocab(pairs.begin(), pairs.end());
  s.action_scores = top100_action_pairs(normal_vector(rng, 120), vocab, s.verb_scores, s.noun_scores);
  return s;
}

Outcome window_exactness() {
  Rng rng(101);
  std::uniform_real_distribution<double> ta_dist(0.01, 5.0), to_dist(0.01, 10.0), extra(0.0, 1000.0);
  int mismatches = 0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 10000; ++i) {
    WindowConfig cfg;
    cfg.anticipation_s = ta_dist(rng);
    cfg.observation_s = to_dist(rng);
    const double start = cfg.anticipation_s + cfg.observation_s + extra(rng);
    const auto w = observation_window(start, cfg);
    const double begin = start - (cfg.anticipation_s + cfg.observation_s);
    const double end = start - cfg.anticipation_s;
    if (w.begin_s != begin || w.end_s != end || w.clamped) ++mismatches;
  }
  const double dt = seconds_since(t0);
  std::ostringstream os;
  os << mismatches << " mismatches in 10000 cases, " << dt << " s";
  return {mismatches == 0 && dt < kWindowBudgetS, os.str()};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  ProbeCheckOptions probe;
  probe.tolerance = kProbeGradTol;
  FocalCheckOptions focal;
  focal.tolerance = kFocalGradTol;
  const auto pr = probe_gradient_check(probe);
  const auto fr = focal_gradient_check(focal);
  const double dt = seconds_since(t0);
  const bool shape = probe.probe.d_model == 32 && probe.probe.n_blocks == 2 && probe.probe.n_heads == 4 &&
                     probe.n_tokens == 6;
  std::ostringstream os;
  os << "probe worst " << pr.worst() << " over " << pr.blocks.size() << " blocks, focal worst " << fr.worst()
     << ", " << dt << " s";
  return {shape && pr.passed() && fr.passed() && dt < kGradBudgetS, os.str()};
}

Outcome focal_reduction() {
  Rng rng(303);
  std::uniform_real_distribution<double> logit(-12.0, 12.0);
  std::uniform_int_distribution<int> width(1, 8);
  double worst = 0.0;
  FocalConfig cfg;
  cfg.gamma = 0.0;
  cfg.alpha.reset();
  for (int i = 0; i < 1000; ++i) {
    const int n = width(rng);
    Eigen::VectorXd x(n);
    for (auto& v : x) v = logit(rng);
    const int target = std::uniform_int_distribution<int>(0, n - 1)(rng);
    // Binary cross-entropy in extended precision, straight from the definition.
    long double bce = 0.0L;
    for (int j = 0; j < n; ++j) {
      const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(x(j))));
      bce -= j == target ? std::log(p) : std::log1p(-p);
    }
    bce /= n;
    const auto got = sigmoid_focal_loss<double>(x, target, cfg);
    worst = std::max(worst, static_cast<double>(std::fabs(static_cast<long double>(got.loss) - bce)));
  }
  std::ostringstream os;
  os << "max |focal - bce| = " << worst << " over 1000 cases";
  return {worst <= kFocalBceTol, os.str()};
}

Outcome recall_oracle() {
  Rng rng(404);
  std::uniform_int_distribution<int> level(0, 6), cls(0, 49);
  std::bernoulli_distribution keep(0.7);
  Eigen::MatrixXd scores(1000, 50);
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    for (Eigen::Index j = 0; j < scores.cols(); ++j) scores(i, j) = level(rng);  // heavy ties
  std::vector<std::int64_t> labels(1000);
  std::vector<bool> mask(1000);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = cls(rng);
    mask[i] = keep(rng);
  }
  const double full = mean_top5_recall(scores, labels).mt5r;
  const double masked = mean_top5_recall(scores, labels, &mask).mt5r;
  const double want_full = *oracle::mt5r(scores, labels);
  const double want_masked = *oracle::mt5r(scores, labels, mask);
  std::ostringstream os;
  os << "full " << full << " vs " << want_full << ", masked " << masked << " vs " << want_masked;
  return {full == want_full && masked == want_masked, os.str()};
}

Outcome overfit() {
  ScratchDir dir("overfit");
  SyntheticDatasetOptions ds;
  ds.out_dir = dir.path();
  ds.n_train = 200;
  ds.n_val = 1;
  ds.n_test = 1;
  ds.n_verbs = 10;
  ds.n_nouns = 10;
  ds.seed = 5;
  make_synthetic_dataset(ds);
  const auto records = parse_annotations(dir / "train.csv");
  const auto vocab = LabelVocabulary::from_records(records);

  SynthProviderOptions feat;
  feat.d_model = 32;
  feat.separability = 1.0;
  feat.seed = 6;
  const auto provider = make_synthetic_provider(feat);
  SplitContext split;
  split.records = &records;
  split.vocab = &vocab;
  split.provider = &provider;

  ProbeConfig probe;
  probe.d_model = 32;
  probe.n_verb = static_cast<Eigen::Index>(vocab.verbs.size());
  probe.n_noun = static_cast<Eigen::Index>(vocab.nouns.size());
  probe.n_action = static_cast<Eigen::Index>(vocab.actions.size());
  probe.seed = 7;
  const HeadConfig head{0, 1e-3, 0.0};
  auto state = TrainState<TrainScalar>::fresh(init_params<TrainScalar>(probe), 8);

  const auto t0 = Clock::now();
  double verb_acc = 0.0, noun_acc = 0.0;
  int epoch = 0;
  while (epoch < kOverfitEpochs) {
    ++epoch;
    train_epoch(state, head, FocalConfig{}, split, 16);
    const auto scores = score_split(state.params, split);
    int verb_hits = 0, noun_hits = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      Eigen::Index v, n;
      scores[i].verb_scores.maxCoeff(&v);
      scores[i].noun_scores.maxCoeff(&n);
      verb_hits += v == records[i].verb_class;
      noun_hits += n == records[i].noun_class;
    }
    verb_acc = verb_hits / static_cast<double>(records.size());
    noun_acc = noun_hits / static_cast<double>(records.size());
    if (verb_acc >= kOverfitTop1 && noun_acc >= kOverfitTop1) break;
  }
  const double dt = seconds_since(t0);
  std::ostringstream os;
  os << "verb top-1 " << verb_acc << ", noun top-1 " << noun_acc << " after " << epoch << " epochs, " << dt
     << " s";
  return {verb_acc >= kOverfitTop1 && noun_acc >= kOverfitTop1 && dt < kOverfitBudgetS, os.str()};
}

Outcome selection_fixture() {
  // Validation matrix, epochs 18 to 27: verb, noun, action overall MT5R.
  const std::vector<std::array<double, 4>> table = {
      {18, 60.9, 59.3, 39.1}, {19, 62.3, 58.8, 38.8}, {20, 63.9, 60.3, 39.2}, {21, 65.1, 60.3, 38.9},
      {22, 63.6, 61.1, 39.6}, {23, 64.0, 60.8, 39.5}, {24, 64.2, 61.2, 39.5}, {25, 65.0, 60.1, 39.5},
      {26, 64.4, 61.8, 39.1}, {27, 64.3, 60.5, 39.2},
  };
  std::vector<std::pair<int, MetricReport>> epochs;
  for (const auto& row : table) {
    MetricReport r;
    for (Field f : kFields) r.mt5r[f][0] = row[1 + f];
    epochs.emplace_back(static_cast<int>(row[0]), r);
  }
  const auto best = best_epoch_per_field(epochs);
  std::ostringstream os;
  os << "verb -> " << best[kVerb] << ", noun -> " << best[kNoun] << ", action -> " << best[kAction];
  return {best == std::array<int, 3>{21, 26, 22}, os.str()};
}

Outcome ensemble_guarantees() {
  Rng rng(707);
  const int n = 60;
  CandidatePool pool;
  for (int id = 0; id < 4; ++id) {
    pool[id].id = id;
    for (int i = 0; i < n; ++i) pool[id].scores.push_back(random_score_set(rng, "x" + std::to_string(i)));
  }
  std::vector<AnnotationRecord> labels;
  std::uniform_int_distribution<int> verb(0, 14), noun(0, 24);
  for (int i = 0; i < n; ++i) labels.push_back({"x" + std::to_string(i), "v", "P01", 10, 11, verb(rng), noun(rng)});

  // One-hot weights, a different candidate per field.
  EnsembleConfig one_hot;
  one_hot.fields = {{{{1, 1.0}}, {{2, 1.0}}, {{3, 1.0}}}};
  one_hot.normalization = Normalization::kNone;
  const auto raw = field_ensemble(pool, one_hot);
  one_hot.normalization = Normalization::kSoftmax;
  const auto soft = field_ensemble(pool, one_hot);
  bool exact = true;
  for (int i = 0; i < n; ++i) {
    exact = exact && raw[i].verb_scores == pool[1].scores[i].verb_scores &&
            raw[i].noun_scores == pool[2].scores[i].noun_scores &&
            raw[i].action_scores == pool[3].scores[i].action_scores;
    exact = exact &&
            soft[i].verb_scores == normalize_scores(pool[1].scores[i].verb_scores, Normalization::kSoftmax) &&
            soft[i].noun_scores == normalize_scores(pool[2].scores[i].noun_scores, Normalization::kSoftmax) &&
            soft[i].action_scores == normalize_scores(pool[3].scores[i].action_scores, Normalization::kSoftmax);
  }

  const auto fit = fit_ensemble_weights(pool, {{{0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3}}}, labels);
  const std::vector<SubsetFlags> flags(n);
  bool dominates = true;
  std::array<double, 3> best_single{};
  for (const auto& [id, c] : pool) {
    const auto r = evaluate_fields(c.scores, labels, flags);
    for (Field f : kFields) {
      best_single[f] = std::max(best_single[f], r.overall(f));
      dominates = dominates && fit.fitted_mt5r[f] >= r.overall(f);
    }
  }

  // Changing one field's weights leaves the other fields untouched.
  EnsembleConfig a, b;
  a.fields = {{{{0, 0.6}, {1, 0.4}}, {{2, 1.0}}, {{1, 0.5}, {3, 0.5}}}};
  b.fields = {{{{0, 0.6}, {1, 0.4}}, {{3, 0.2}, {0, 0.8}}, {{1, 0.5}, {3, 0.5}}}};
  const auto ea = field_ensemble(pool, a), eb = field_ensemble(pool, b);
  bool independent = true;
  for (int i = 0; i < n; ++i)
    independent = independent && ea[i].verb_scores == eb[i].verb_scores &&
                  ea[i].action_scores == eb[i].action_scores && !(ea[i].noun_scores == eb[i].noun_scores);

  std::ostringstream os;
  os << "one-hot exact " << exact << "; fitted MT5R " << fit.fitted_mt5r[0] << "/" << fit.fitted_mt5r[1] << "/"
     << fit.fitted_mt5r[2] << " vs best single " << best_single[0] << "/" << best_single[1] << "/"
     << best_single[2] << "; fields independent " << independent;
  return {exact && dominates && independent, os.str()};
}

struct PipelineRun {
  std::string metrics;
  std::string submission;
  Submission in_memory;
  std::filesystem::path submission_path;
};

PipelineRun run_pipeline(const ScratchDir& dir, const std::string& name) {
  SyntheticDatasetOptions ds;
  ds.out_dir = dir / "data";
  ds.n_train = 80;
  ds.n_val = 30;
  ds.n_test = 12;
  ds.n_verbs = 6;
  ds.n_nouns = 8;
  ds.seed = 21;
  if (!std::filesystem::exists(ds.out_dir)) make_synthetic_dataset(ds);

  RunConfig cfg;
  cfg.train_annotations = ds.out_dir / "train.csv";
  cfg.val_annotations = ds.out_dir / "val.csv";
  cfg.test_annotations = ds.out_dir / "test.csv";
  cfg.unseen_participants = ds.out_dir / "unseen.txt";
  cfg.tail_verbs = ds.out_dir / "tail_verbs.txt";
  cfg.tail_nouns = ds.out_dir / "tail_nouns.txt";
  cfg.tail_actions = ds.out_dir / "tail_actions.txt";
  cfg.run_dir = dir / name;
  cfg.probe.d_model = 16;
  cfg.probe.n_blocks = 1;
  cfg.probe.n_heads = 2;
  cfg.synth_n_obs = 4;
  cfg.synth_n_pred = 2;
  cfg.learning_rates = {3e-3, 1e-3};
  cfg.weight_decays = {0.0};
  cfg.allow_any_grid = true;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.seed = 42;
  run_training(cfg);
  run_selection(cfg.run_dir);
  run_ensemble(cfg.run_dir);
  PipelineRun out;
  out.submission_path = cfg.run_dir / "submission.json";
  out.in_memory = run_submission(cfg.run_dir, out.submission_path);
  out.metrics = slurp(cfg.run_dir / "metrics.tsv");
  out.submission = slurp(out.submission_path);
  return out;
}

Outcome submission_validity(const PipelineRun& run) {
  const auto j = nlohmann::json::parse(run.submission);
  validate_submission_json(j);
  std::size_t bad = 0;
  for (const auto& [id, entry] : j.at("results").items()) {
    std::set<std::string> pairs;
    for (const auto& [key, value] : entry.at("action").items()) pairs.insert(key);
    if (entry.at("verb").size() != 97 || entry.at("noun").size() != 300 || pairs.size() != 100 ||
        entry.at("action").size() != 100)
      ++bad;
  }
  const auto parsed = read_submission(run.submission_path);
  const bool round_trip = parsed.results == run.in_memory.results;
  std::ostringstream os;
  os << j.at("results").size() << " instances, " << bad << " malformed, round-trip equal " << round_trip;
  return {bad == 0 && round_trip && !run.in_memory.results.empty(), os.str()};
}

Outcome determinism(const PipelineRun& a, const PipelineRun& b) {
  const bool metrics = a.metrics == b.metrics && !a.metrics.empty();
  const bool submission = a.submission == b.submission && !a.submission.empty();
  std::ostringstream os;
  os << "metrics.tsv identical " << metrics << " (" << a.metrics.size() << " bytes), submission identical "
     << submission << " (" << a.submission.size() << " bytes)";
  return {metrics && submission, os.str()};
}

bool report(int id, const std::string& name, const std::function<Outcome()>& fn) {
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
  return o.pass;
}

}  // namespace

int main() {
  bool ok = true;
  ok &= report(1, "window exactness", window_exactness);
  ok &= report(2, "gradient suite", gradient_suite);
  ok &= report(3, "focal reduces to bce", focal_reduction);
  ok &= report(4, "mt5r oracle", recall_oracle);
  ok &= report(5, "overfit smoke", overfit);
  ok &= report(6, "selection fixture", selection_fixture);
  ok &= report(7, "ensemble guarantees", ensemble_guarantees);

  ScratchDir dir("acceptance_pipeline");
  PipelineRun first, second;
  std::string pipeline_error;
  try {
    first = run_pipeline(dir, "run_a");
    second = run_pipeline(dir, "run_b");
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  const auto guarded = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!pipeline_error.empty()) return {false, "pipeline failed: " + pipeline_error};
      return fn();
    };
  };
  ok &= report(8, "submission validity", guarded([&] { return submission_validity(first); }));
  ok &= report(9, "determinism", guarded([&] { return determinism(first, second); }));

  std::cout << (ok ? "ALL PASS" : "SOME CRITERIA FAILED") << std::endl;
  return ok ? 0 : 1;
}
