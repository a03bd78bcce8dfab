#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iostream>

#include "jfaa/gradcheck.hpp"
#include "jfaa/pipeline.hpp"

namespace fs = std::filesystem;
using namespace jfaa;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kCheck = 4 };

std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void add_window_options(CLI::App* cmd, WindowConfig& w, double& video_fps) {
  cmd->add_option("--anticipation", w.anticipation_s, "Anticipation gap T_a in seconds")->capture_default_str();
  cmd->add_option("--observation", w.observation_s, "Observation span T_o in seconds")->capture_default_str();
  cmd->add_option("--frames", w.n_frames, "Frames per clip")->capture_default_str();
  cmd->add_option("--sample-fps", w.sample_fps, "Clip sampling rate")->capture_default_str();
  cmd->add_option("--video-fps", video_fps, "Source video frame rate")->capture_default_str();
}

// Fills options that were not given on the command line from a key = value file.
void apply_config_file(CLI::App* cmd, const fs::path& path) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path.string());
  } catch (const CLI::Error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  for (const auto& item : items) {
    if (!item.parents.empty() || item.name == "++" || item.name == "--") continue;
    auto* opt = cmd->get_option_no_throw("--" + item.name);
    if (!opt || item.name == "config") throw ConfigError(path.string() + ": unknown key '" + item.name + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(item.inputs);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError(path.string() + ": " + item.name + ": " + e.what());
    }
  }
}

int cmd_synth(const SyntheticDatasetOptions& o) {
  make_synthetic_dataset(o);
  std::clog << "wrote synthetic dataset to " << o.out_dir << "\n";
  return kOk;
}

int cmd_windows(const fs::path& annotations, const fs::path& out, const WindowConfig& w, double video_fps) {
  w.validate();
  const auto records = parse_annotations(annotations);
  std::string tsv = "narration_id\twindow_begin_s\twindow_end_s\tclamped\tframe_indices\tframe_timestamps_s\n";
  for (const auto& r : records) {
    ClipSpec clip;
    try {
      clip = resolve_clip(r, w, video_fps);
    } catch (const UnsatisfiableWindow& e) {
      std::cerr << "unsatisfiable window: " << r.narration_id << "\n";
      throw;
    }
    tsv += clip.narration_id + "\t" + shortest(clip.window_begin_s) + "\t" + shortest(clip.window_end_s) +
           "\t" + (clip.clamped ? "1" : "0") + "\t";
    for (std::size_t k = 0; k < clip.frame_indices.size(); ++k)
      tsv += (k ? "," : "") + std::to_string(clip.frame_indices[k]);
    tsv += "\t";
    for (std::size_t k = 0; k < clip.frame_timestamps_s.size(); ++k)
      tsv += (k ? "," : "") + shortest(clip.frame_timestamps_s[k]);
    tsv += "\n";
  }
  std::ofstream os(out, std::ios::binary);
  if (!os) throw DataError("cannot write " + out.string());
  os << tsv;
  std::clog << records.size() << " clips written to " << out << "\n";
  return kOk;
}

int cmd_select(const fs::path& run_dir, const fs::path& metrics) {
  const auto sel = run_dir.empty() ? select_from_metrics(read_metrics_tsv(metrics)) : run_selection(run_dir);
  for (Field f : kFields) std::cout << kFieldNames[f] << " -> " << sel.best_epoch[f] << "\n";
  std::clog << "ensemble candidates:";
  for (int e : sel.candidates) std::clog << ' ' << e;
  std::clog << "\n";
  return kOk;
}

int cmd_ensemble(const fs::path& run_dir, const fs::path& weights) {
  if (!weights.empty()) {
    // A supplied config bypasses fitting; it is validated before it is installed.
    std::ifstream in(weights, std::ios::binary);
    if (!in) throw DataError("cannot read " + weights.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    parse_ensemble_config_json(text);
    std::ofstream(run_dir / "ensemble.json", std::ios::binary) << text;
    std::clog << "installed ensemble weights from " << weights << "\n";
    return kOk;
  }
  const auto fit = run_ensemble(run_dir);
  for (Field f : kFields) {
    std::clog << kFieldNames[f] << ":";
    for (const auto& c : fit.config.fields[f]) std::clog << " epoch " << c.candidate_id << " x " << c.weight;
    std::clog << " (MT5R " << fit.fitted_mt5r[f] << ")\n";
  }
  return kOk;
}

int cmd_gradcheck(const ProbeCheckOptions& probe, const FocalCheckOptions& focal) {
  const auto report = [](const char* what, const GradCheckReport& r) {
    for (const auto& b : r.blocks)
      if (b.relative_error > r.tolerance) std::cerr << what << " " << b.name << ": " << b.relative_error << "\n";
    std::clog << what << ": " << r.blocks.size() << " blocks, worst relative error " << r.worst()
              << " (tolerance " << r.tolerance << ")\n";
    return r.passed();
  };
  const bool ok_probe = report("probe", probe_gradient_check(probe));
  const bool ok_focal = report("focal", focal_gradient_check(focal));
  if (!ok_probe || !ok_focal) throw CheckError("gradient check failed");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Action anticipation pipeline: windows, probe training, selection, ensembling, submission"};
  app.require_subcommand(1);
  app.allow_extras(false);

  SyntheticDatasetOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Write a long-tailed synthetic dataset");
  c_synth->add_option("--out", synth.out_dir, "Output directory")->required();
  c_synth->add_option("--n-train", synth.n_train)->capture_default_str();
  c_synth->add_option("--n-val", synth.n_val)->capture_default_str();
  c_synth->add_option("--n-test", synth.n_test)->capture_default_str();
  c_synth->add_option("--verbs", synth.n_verbs, "Verb classes used")->capture_default_str();
  c_synth->add_option("--nouns", synth.n_nouns, "Noun classes used")->capture_default_str();
  c_synth->add_option("--participants", synth.n_participants)->capture_default_str();
  c_synth->add_option("--unseen-participants", synth.n_unseen_participants)->capture_default_str();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_flag("--features", synth.write_features, "Also write .feat files");
  c_synth->add_option("--d-model", synth.features.d_model)->capture_default_str();
  c_synth->add_option("--n-obs", synth.features.n_obs)->capture_default_str();
  c_synth->add_option("--n-pred", synth.features.n_pred)->capture_default_str();
  c_synth->add_option("--separability", synth.features.separability)->capture_default_str();

  fs::path win_annotations, win_out;
  WindowConfig win;
  double win_fps = 50.0;
  auto* c_windows = app.add_subcommand("windows", "Emit observation windows and frame schedules as TSV");
  c_windows->add_option("--annotations", win_annotations, "Annotation CSV")->required()->check(CLI::ExistingFile);
  c_windows->add_option("--out", win_out, "Output TSV")->required();
  add_window_options(c_windows, win, win_fps);

  RunConfig run;
  bool no_alpha = false;
  std::string normalization = "softmax";
  auto* c_train = app.add_subcommand("train", "Train the probe head grid and log per-epoch validation metrics");
  fs::path train_config;
  c_train->add_option("--config", train_config, "TOML-style key = value file of train options; flags override it")
      ->check(CLI::ExistingFile);
  c_train->add_option("--train", run.train_annotations, "Training annotations (required)");
  c_train->add_option("--val", run.val_annotations, "Validation annotations (required)");
  c_train->add_option("--test", run.test_annotations, "Test annotations to score for submission");
  c_train->add_option("--features-dir", run.features_dir, "Directory of <narration_id>.feat files; synthetic when empty");
  c_train->add_option("--run-dir", run.run_dir)->capture_default_str();
  c_train->add_option("--unseen", run.unseen_participants, "Unseen participant ids");
  c_train->add_option("--tail-verbs", run.tail_verbs);
  c_train->add_option("--tail-nouns", run.tail_nouns);
  c_train->add_option("--tail-actions", run.tail_actions);
  add_window_options(c_train, run.window, run.video_fps);
  c_train->add_option("--perturb-lo", run.window.perturb_lo_s)->capture_default_str();
  c_train->add_option("--perturb-hi", run.window.perturb_hi_s)->capture_default_str();
  c_train->add_option("--d-model", run.probe.d_model)->capture_default_str();
  c_train->add_option("--blocks", run.probe.n_blocks)->capture_default_str();
  c_train->add_option("--heads", run.probe.n_heads, "Attention heads")->capture_default_str();
  c_train->add_option("--mlp-ratio", run.probe.mlp_ratio)->capture_default_str();
  c_train->add_option("--alpha", run.focal.alpha, "Focal positive weight")->capture_default_str();
  c_train->add_flag("--no-alpha", no_alpha, "Weight both focal branches by 1");
  c_train->add_option("--gamma", run.focal.gamma)->capture_default_str();
  c_train->add_option("--field-weights", run.focal.field_weights, "Verb, noun, action loss weights")
      ->expected(3)
      ->capture_default_str();
  c_train->add_option("--lr", run.learning_rates, "Learning-rate grid")->capture_default_str();
  c_train->add_option("--wd", run.weight_decays, "Weight-decay grid")->capture_default_str();
  c_train->add_flag("--allow-any-grid", run.allow_any_grid, "Permit grids other than 20 heads");
  c_train->add_option("--epochs", run.epochs)->capture_default_str();
  c_train->add_option("--batch-size", run.batch_size)->capture_default_str();
  c_train->add_option("--seed", run.seed)->capture_default_str();
  c_train->add_option("--parallel-heads", run.parallel_heads, "Worker threads over heads")->capture_default_str();
  c_train->add_option("--separability", run.synth_separability)->capture_default_str();
  c_train->add_option("--n-obs", run.synth_n_obs)->capture_default_str();
  c_train->add_option("--n-pred", run.synth_n_pred)->capture_default_str();
  c_train->add_option("--ensemble-step", run.ensemble_step)->capture_default_str();
  c_train->add_option("--normalization", normalization)->check(CLI::IsMember({"softmax", "none"}))->capture_default_str();
  c_train->add_option("--sls-pt", run.sls_pt)->check(CLI::Range(0, 5))->capture_default_str();
  c_train->add_option("--sls-tl", run.sls_tl)->check(CLI::Range(0, 5))->capture_default_str();
  c_train->add_option("--sls-td", run.sls_td)->check(CLI::Range(0, 5))->capture_default_str();

  fs::path eval_run;
  int eval_epoch = 0;
  auto* c_eval = app.add_subcommand("eval", "Re-score every head checkpoint of one epoch on validation");
  c_eval->add_option("--run-dir", eval_run)->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--epoch", eval_epoch)->required()->check(CLI::PositiveNumber);

  fs::path select_run, select_metrics;
  auto* c_select = app.add_subcommand("select", "Best head per epoch and best epoch per field");
  auto* o_select_run = c_select->add_option("--run-dir", select_run)->check(CLI::ExistingDirectory);
  auto* o_select_metrics =
      c_select->add_option("--metrics", select_metrics, "A metrics.tsv outside a run directory")->check(CLI::ExistingFile);
  o_select_run->excludes(o_select_metrics);
  c_select->require_option(1);

  fs::path ens_run, ens_weights;
  auto* c_ensemble = app.add_subcommand("ensemble", "Fit field-aware ensemble weights on validation");
  c_ensemble->add_option("--run-dir", ens_run)->required()->check(CLI::ExistingDirectory);
  c_ensemble->add_option("--weights", ens_weights, "Use this ensemble config instead of fitting")->check(CLI::ExistingFile);

  fs::path submit_run, submit_out;
  auto* c_submit = app.add_subcommand("submit", "Apply the ensemble and write a validated submission");
  c_submit->add_option("--run-dir", submit_run)->required()->check(CLI::ExistingDirectory);
  c_submit->add_option("--out", submit_out)->required();

  ProbeCheckOptions gc_probe;
  FocalCheckOptions gc_focal;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference checks of the probe and focal loss");
  c_grad->add_option("--d-model", gc_probe.probe.d_model)->capture_default_str();
  c_grad->add_option("--blocks", gc_probe.probe.n_blocks)->capture_default_str();
  c_grad->add_option("--heads", gc_probe.probe.n_heads)->capture_default_str();
  c_grad->add_option("--tokens", gc_probe.n_tokens)->capture_default_str();
  c_grad->add_option("--tolerance", gc_probe.tolerance, "Probe relative tolerance")->capture_default_str();
  c_grad->add_option("--focal-tolerance", gc_focal.tolerance)->capture_default_str();
  c_grad->add_option("--seed", gc_probe.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_windows) return cmd_windows(win_annotations, win_out, win, win_fps);
    if (*c_train) {
      if (!train_config.empty()) apply_config_file(c_train, train_config);
      if (no_alpha) run.focal.alpha.reset();
      run.normalization = normalization == "none" ? Normalization::kNone : Normalization::kSoftmax;
      const auto result = run_training(run);
      const auto best = best_epoch_per_field(result.best_per_epoch);
      std::clog << "best epochs: verb " << best[kVerb] << ", noun " << best[kNoun] << ", action "
                << best[kAction] << "\n";
      return kOk;
    }
    if (*c_eval) {
      for (const auto& c : run_evaluation(eval_run, eval_epoch))
        std::clog << "head " << c.head_id << ": action MT5R " << c.report.overall(kAction) << "\n";
      return kOk;
    }
    if (*c_select) return cmd_select(select_run, select_metrics);
    if (*c_ensemble) return cmd_ensemble(ens_run, ens_weights);
    if (*c_submit) {
      const auto sub = run_submission(submit_run, submit_out);
      std::clog << sub.results.size() << " instances written to " << submit_out << "\n";
      return kOk;
    }
    if (*c_grad) {
      gc_focal.seed = gc_probe.seed;
      return cmd_gradcheck(gc_probe, gc_focal);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const CheckError& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return kCheck;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
