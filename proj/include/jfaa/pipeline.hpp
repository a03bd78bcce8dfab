#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jfaa/ensemble.hpp"
#include "jfaa/features.hpp"
#include "jfaa/focal_loss.hpp"
#include "jfaa/probe.hpp"
#include "jfaa/submission.hpp"
#include "jfaa/trainer.hpp"
#include "jfaa/windows.hpp"

namespace jfaa {

/// End-to-end run settings. Persisted as `run.json` in the run directory so
/// later stages see the same inputs.
struct RunConfig {
  std::filesystem::path train_annotations;
  std::filesystem::path val_annotations;
  std::filesystem::path test_annotations;  // optional; scores for submission
  std::filesystem::path features_dir;      // empty selects the synthetic provider
  std::filesystem::path run_dir = "runs/default";
  std::filesystem::path unseen_participants;  // optional membership files
  std::filesystem::path tail_verbs;
  std::filesystem::path tail_nouns;
  std::filesystem::path tail_actions;

  WindowConfig window;
  double video_fps = 50.0;
  ProbeConfig probe;  // class counts are overwritten from the training vocabulary
  FocalConfig focal;
  std::vector<double> learning_rates = {3e-3, 1e-3, 3e-4, 1e-4, 3e-5};
  std::vector<double> weight_decays = {0.0, 1e-4, 1e-2, 1e-1};
  bool allow_any_grid = false;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int parallel_heads = 1;

  double synth_separability = 1.0;
  Eigen::Index synth_n_obs = 16;
  Eigen::Index synth_n_pred = 8;

  double ensemble_step = 0.1;
  Normalization normalization = Normalization::kSoftmax;
  int sls_pt = 2;
  int sls_tl = 3;
  int sls_td = 4;

  void validate() const;
};

std::string run_config_json(const RunConfig& cfg);
RunConfig parse_run_config_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& run_dir);

struct TrainRunResult {
  std::vector<std::pair<int, MetricReport>> best_per_epoch;  // (epoch, selected head's report)
  std::vector<int> selected_head;                            // per epoch
  std::vector<std::vector<double>> epoch_losses;             // [epoch][head]
};

/// Trains the head grid for cfg.epochs and writes the run directory:
/// head_<id>/epoch_<k>.ckpt, epoch_<k>_best.scores, metrics.tsv, run.json, vocab.tsv.
TrainRunResult run_training(const RunConfig& cfg);

/// Re-scores every head checkpoint of one epoch on the validation split.
std::vector<EpochCandidate> run_evaluation(const std::filesystem::path& run_dir, int epoch);

struct MetricsRow {
  int epoch = 0;
  int head = 0;
  MetricReport report;
};

std::string metrics_tsv_header();
std::string metrics_tsv_row(int epoch, int head, const MetricReport& report);
std::vector<MetricsRow> read_metrics_tsv(const std::filesystem::path& path);

struct Selection {
  std::map<int, int> best_head;       // epoch -> head
  std::array<int, 3> best_epoch{};    // per field
  std::vector<int> candidates;        // epochs entering the ensemble
};

Selection select_from_metrics(const std::vector<MetricsRow>& rows);
/// Reads metrics.tsv, writes selection.json.
Selection run_selection(const std::filesystem::path& run_dir);

/// Fits per-field weights over the selected epochs; writes ensemble.json.
FitResult run_ensemble(const std::filesystem::path& run_dir);

/// Applies ensemble.json to the test (or validation) candidate scores and
/// writes a validated submission file.
Submission run_submission(const std::filesystem::path& run_dir, const std::filesystem::path& out);

std::string ensemble_config_json(const FitResult& fit, double step);
EnsembleConfig parse_ensemble_config_json(const std::string& text);

struct SyntheticDatasetOptions {
  std::filesystem::path out_dir;
  int n_train = 200;
  int n_val = 60;
  int n_test = 40;
  int n_verbs = 10;
  int n_nouns = 10;
  int n_participants = 10;
  int n_unseen_participants = 2;
  std::uint64_t seed = 0;
  /// Also write `<id>.feat` files into out_dir/features.
  bool write_features = false;
  SynthProviderOptions features;
};

/// Long-tailed synthetic annotations plus membership files
/// (unseen.txt, tail_verbs.txt, tail_nouns.txt, tail_actions.txt).
void make_synthetic_dataset(const SyntheticDatasetOptions& options);

}  // namespace jfaa
