#include "jfaa/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "jfaa/checkpoint.hpp"
#include "jfaa/metrics.hpp"

namespace jfaa {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

fs::path checkpoint_path(const fs::path& run_dir, int head, int epoch) {
  return run_dir / ("head_" + std::to_string(head)) / ("epoch_" + std::to_string(epoch) + ".ckpt");
}

fs::path scores_path(const fs::path& run_dir, int epoch, bool test) {
  return run_dir / ("epoch_" + std::to_string(epoch) + (test ? "_best.test.scores" : "_best.scores"));
}

std::string vocab_text(const LabelVocabulary& v) {
  std::ostringstream os;
  os << "verbs";
  for (int x : v.verbs) os << '\t' << x;
  os << "\nnouns";
  for (int x : v.nouns) os << '\t' << x;
  os << "\nactions";
  for (const auto& [a, b] : v.actions) os << '\t' << a << ',' << b;
  os << '\n';
  return os.str();
}

LabelVocabulary parse_vocab(const std::string& text) {
  LabelVocabulary v;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind, cell;
    std::getline(ls, kind, '\t');
    while (std::getline(ls, cell, '\t')) {
      if (kind == "verbs") v.verbs.push_back(std::stoi(cell));
      else if (kind == "nouns") v.nouns.push_back(std::stoi(cell));
      else if (kind == "actions") {
        const auto comma = cell.find(',');
        v.actions.emplace_back(std::stoi(cell.substr(0, comma)), std::stoi(cell.substr(comma + 1)));
      }
    }
  }
  if (v.verbs.empty() || v.nouns.empty() || v.actions.empty()) throw DataError("vocab.tsv is incomplete");
  return v;
}

FeatureProvider make_provider(const RunConfig& cfg) {
  if (!cfg.features_dir.empty()) return make_file_provider(cfg.features_dir);
  SynthProviderOptions o;
  o.d_model = cfg.probe.d_model;
  o.n_obs = cfg.synth_n_obs;
  o.n_pred = cfg.synth_n_pred;
  o.seed = cfg.seed;
  o.separability = cfg.synth_separability;
  return make_synthetic_provider(o);
}

std::vector<SubsetFlags> membership(const RunConfig& cfg, const std::vector<AnnotationRecord>& records) {
  std::set<std::string> unseen;
  TailClasses tail;
  if (!cfg.unseen_participants.empty()) unseen = read_id_set(cfg.unseen_participants);
  if (!cfg.tail_verbs.empty()) tail.verbs = read_class_set(cfg.tail_verbs);
  if (!cfg.tail_nouns.empty()) tail.nouns = read_class_set(cfg.tail_nouns);
  if (!cfg.tail_actions.empty()) tail.actions = read_pair_set(cfg.tail_actions);
  return split_membership(records, unseen, tail);
}

std::string format_value(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

ProbeConfig probe_for(const RunConfig& cfg, const LabelVocabulary& vocab, int head_id) {
  ProbeConfig p = cfg.probe;
  p.n_verb = static_cast<Eigen::Index>(vocab.verbs.size());
  p.n_noun = static_cast<Eigen::Index>(vocab.nouns.size());
  p.n_action = static_cast<Eigen::Index>(vocab.actions.size());
  p.seed = derive_seed(cfg.seed, 0x68656164ULL, static_cast<std::uint64_t>(head_id));
  return p;
}

const char* normalization_name(Normalization n) {
  return n == Normalization::kSoftmax ? "softmax" : "none";
}

Normalization parse_normalization(const std::string& s) {
  if (s == "softmax") return Normalization::kSoftmax;
  if (s == "none") return Normalization::kNone;
  throw ConfigError("unknown normalization '" + s + "'");
}

}  // namespace

void RunConfig::validate() const {
  window.validate();
  focal.validate();
  ProbeConfig shape = probe;
  shape.n_verb = shape.n_noun = shape.n_action = 1;
  shape.validate();
  if (train_annotations.empty() || val_annotations.empty())
    throw ConfigError("train and validation annotations are required");
  if (!(video_fps > 0.0)) throw ConfigError("video_fps must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (parallel_heads < 1) throw ConfigError("parallel_heads must be at least 1");
  if (!(synth_separability >= 0.0 && synth_separability <= 1.0))
    throw ConfigError("synthetic separability must lie in [0, 1]");
  build_head_grid(learning_rates, weight_decays, allow_any_grid);
}

std::string run_config_json(const RunConfig& c) {
  ojson j;
  j["train_annotations"] = c.train_annotations.string();
  j["val_annotations"] = c.val_annotations.string();
  j["test_annotations"] = c.test_annotations.string();
  j["features_dir"] = c.features_dir.string();
  j["run_dir"] = c.run_dir.string();
  j["unseen_participants"] = c.unseen_participants.string();
  j["tail_verbs"] = c.tail_verbs.string();
  j["tail_nouns"] = c.tail_nouns.string();
  j["tail_actions"] = c.tail_actions.string();
  j["window"] = {{"anticipation_s", c.window.anticipation_s},
                 {"observation_s", c.window.observation_s},
                 {"n_frames", c.window.n_frames},
                 {"sample_fps", c.window.sample_fps},
                 {"perturb_lo_s", c.window.perturb_lo_s},
                 {"perturb_hi_s", c.window.perturb_hi_s}};
  j["video_fps"] = c.video_fps;
  j["probe"] = {{"d_model", c.probe.d_model},
                {"n_blocks", c.probe.n_blocks},
                {"n_heads", c.probe.n_heads},
                {"mlp_ratio", c.probe.mlp_ratio}};
  j["focal"] = {{"alpha", c.focal.alpha ? ojson(*c.focal.alpha) : ojson(nullptr)},
                {"gamma", c.focal.gamma},
                {"field_weights", c.focal.field_weights}};
  j["learning_rates"] = c.learning_rates;
  j["weight_decays"] = c.weight_decays;
  j["allow_any_grid"] = c.allow_any_grid;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["parallel_heads"] = c.parallel_heads;
  j["synth"] = {{"separability", c.synth_separability},
                {"n_obs", c.synth_n_obs},
                {"n_pred", c.synth_n_pred}};
  j["ensemble_step"] = c.ensemble_step;
  j["normalization"] = normalization_name(c.normalization);
  j["sls"] = {c.sls_pt, c.sls_tl, c.sls_td};
  return j.dump(2) + "\n";
}

RunConfig parse_run_config_json(const std::string& text) {
  RunConfig c;
  try {
    const auto j = ojson::parse(text);
    const auto path = [&](const char* key) { return fs::path(j.at(key).get<std::string>()); };
    c.train_annotations = path("train_annotations");
    c.val_annotations = path("val_annotations");
    c.test_annotations = path("test_annotations");
    c.features_dir = path("features_dir");
    c.run_dir = path("run_dir");
    c.unseen_participants = path("unseen_participants");
    c.tail_verbs = path("tail_verbs");
    c.tail_nouns = path("tail_nouns");
    c.tail_actions = path("tail_actions");
    const auto& w = j.at("window");
    c.window.anticipation_s = w.at("anticipation_s");
    c.window.observation_s = w.at("observation_s");
    c.window.n_frames = w.at("n_frames");
    c.window.sample_fps = w.at("sample_fps");
    c.window.perturb_lo_s = w.at("perturb_lo_s");
    c.window.perturb_hi_s = w.at("perturb_hi_s");
    c.video_fps = j.at("video_fps");
    const auto& p = j.at("probe");
    c.probe.d_model = p.at("d_model");
    c.probe.n_blocks = p.at("n_blocks");
    c.probe.n_heads = p.at("n_heads");
    c.probe.mlp_ratio = p.at("mlp_ratio");
    const auto& f = j.at("focal");
    if (f.at("alpha").is_null()) c.focal.alpha.reset();
    else c.focal.alpha = f.at("alpha").get<double>();
    c.focal.gamma = f.at("gamma");
    c.focal.field_weights = f.at("field_weights");
    c.learning_rates = j.at("learning_rates").get<std::vector<double>>();
    c.weight_decays = j.at("weight_decays").get<std::vector<double>>();
    c.allow_any_grid = j.at("allow_any_grid");
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.seed = j.at("seed");
    c.parallel_heads = j.at("parallel_heads");
    const auto& s = j.at("synth");
    c.synth_separability = s.at("separability");
    c.synth_n_obs = s.at("n_obs");
    c.synth_n_pred = s.at("n_pred");
    c.ensemble_step = j.at("ensemble_step");
    c.normalization = parse_normalization(j.at("normalization"));
    const auto sls = j.at("sls").get<std::vector<int>>();
    if (sls.size() != 3) throw ConfigError("sls must hold three integers");
    c.sls_pt = sls[0];
    c.sls_tl = sls[1];
    c.sls_td = sls[2];
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run.json: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& run_dir) {
  return parse_run_config_json(read_text(run_dir / "run.json"));
}

std::string metrics_tsv_header() {
  std::string h = "epoch\thead";
  for (Field f : kFields)
    for (const char* s : kSubsetNames) h += std::string("\t") + kFieldNames[f] + "_" + s + "_mt5r";
  return h + "\n";
}

std::string metrics_tsv_row(int epoch, int head, const MetricReport& report) {
  std::string row = std::to_string(epoch) + "\t" + std::to_string(head);
  for (Field f : kFields)
    for (int s = 0; s < 3; ++s) row += "\t" + format_value(report.mt5r[f][s]);
  return row + "\n";
}

std::vector<MetricsRow> read_metrics_tsv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty metrics file");
  std::vector<std::string> columns;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, '\t')) columns.push_back(cell);
  }
  if (columns.size() < 2 || columns[0] != "epoch" || columns[1] != "head")
    throw DataError(path.string() + ": header must start with epoch, head");
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    if (cells.size() != columns.size())
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": wrong column count");
    MetricsRow row;
    try {
      row.epoch = std::stoi(cells[0]);
      row.head = std::stoi(cells[1]);
      for (std::size_t c = 2; c < cells.size(); ++c) {
        if (cells[c] == "NA") continue;
        for (Field f : kFields)
          for (int s = 0; s < 3; ++s)
            if (columns[c] == std::string(kFieldNames[f]) + "_" + kSubsetNames[s] + "_mt5r")
              row.report.mt5r[f][s] = std::stod(cells[c]);
      }
    } catch (const std::logic_error&) {
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": malformed number");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

TrainRunResult run_training(const RunConfig& cfg) {
  cfg.validate();
  const auto train = parse_annotations(cfg.train_annotations);
  const auto val = parse_annotations(cfg.val_annotations);
  std::vector<AnnotationRecord> test;
  if (!cfg.test_annotations.empty()) test = parse_annotations(cfg.test_annotations);
  if (train.empty() || val.empty()) throw DataError("training and validation splits must be non-empty");

  const auto vocab = LabelVocabulary::from_records(train);
  const auto provider = make_provider(cfg);
  const auto val_flags = membership(cfg, val);
  const auto grid = build_head_grid(cfg.learning_rates, cfg.weight_decays, cfg.allow_any_grid);

  fs::create_directories(cfg.run_dir);
  write_text(cfg.run_dir / "run.json", run_config_json(cfg));
  write_text(cfg.run_dir / "vocab.tsv", vocab_text(vocab));
  for (const auto& h : grid) fs::create_directories(cfg.run_dir / ("head_" + std::to_string(h.head_id)));

  const SplitContext train_ctx{&train, &vocab, &provider, cfg.window, cfg.video_fps};
  const SplitContext val_ctx{&val, &vocab, &provider, cfg.window, cfg.video_fps};
  const SplitContext test_ctx{&test, &vocab, &provider, cfg.window, cfg.video_fps};

  std::vector<TrainState<TrainScalar>> states;
  states.reserve(grid.size());
  for (const auto& h : grid) {
    auto params = init_params<TrainScalar>(probe_for(cfg, vocab, h.head_id));
    states.push_back(TrainState<TrainScalar>::fresh(
        std::move(params), derive_seed(cfg.seed, 0x747261696eULL, static_cast<std::uint64_t>(h.head_id))));
  }

  TrainRunResult result;
  std::string tsv = metrics_tsv_header();
  const auto workers = static_cast<std::size_t>(std::min<int>(cfg.parallel_heads, static_cast<int>(grid.size())));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<EpochCandidate> candidates(grid.size());
    std::vector<double> losses(grid.size());
    std::vector<std::exception_ptr> errors(grid.size());
    const auto work = [&](std::size_t first) {
      for (std::size_t i = first; i < grid.size(); i += workers) {
        try {
          auto& state = states[i];
          // Reseed per epoch so heads and epochs draw from independent streams.
          state.rng.seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(grid[i].head_id),
                                     static_cast<std::uint64_t>(epoch), 0x6570ULL));
          losses[i] = train_epoch(state, grid[i], cfg.focal, train_ctx, cfg.batch_size).mean_loss;
          const auto ckpt = checkpoint_path(cfg.run_dir, grid[i].head_id, epoch);
          save_checkpoint(state.params, ckpt);
          candidates[i] = evaluate_checkpoint(state.params, val_ctx, val_flags, epoch, grid[i].head_id);
          candidates[i].checkpoint = ckpt;
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    if (workers <= 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
      for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);

    for (const auto& c : candidates) tsv += metrics_tsv_row(epoch, c.head_id, c.report);
    const auto& best = select_best_head(candidates);
    write_score_file(best.scores, scores_path(cfg.run_dir, epoch, false));
    if (!test.empty()) {
      const auto idx = static_cast<std::size_t>(&best - candidates.data());
      write_score_file(score_split(states[idx].params, test_ctx), scores_path(cfg.run_dir, epoch, true));
    }
    result.best_per_epoch.emplace_back(epoch, best.report);
    result.selected_head.push_back(best.head_id);
    result.epoch_losses.push_back(losses);
    std::clog << "epoch " << epoch << ": best head " << best.head_id << " action MT5R "
              << format_value(best.report.mt5r[kAction][0]) << "\n";
  }
  write_text(cfg.run_dir / "metrics.tsv", tsv);
  return result;
}

std::vector<EpochCandidate> run_evaluation(const fs::path& run_dir, int epoch) {
  const auto cfg = load_run_config(run_dir);
  const auto val = parse_annotations(cfg.val_annotations);
  const auto vocab = parse_vocab(read_text(run_dir / "vocab.tsv"));
  const auto provider = make_provider(cfg);
  const auto flags = membership(cfg, val);
  const SplitContext ctx{&val, &vocab, &provider, cfg.window, cfg.video_fps};
  const auto grid = build_head_grid(cfg.learning_rates, cfg.weight_decays, cfg.allow_any_grid);

  std::vector<EpochCandidate> out;
  ojson j = ojson::object();
  for (const auto& h : grid) {
    const auto path = checkpoint_path(run_dir, h.head_id, epoch);
    const auto params = load_checkpoint<TrainScalar>(path);
    auto c = evaluate_checkpoint(params, ctx, flags, epoch, h.head_id);
    c.checkpoint = path;
    j["head_" + std::to_string(h.head_id)] = ojson::parse(metric_report_json(c.report));
    out.push_back(std::move(c));
  }
  write_text(run_dir / ("eval_epoch_" + std::to_string(epoch) + ".json"), j.dump(2) + "\n");
  return out;
}

Selection select_from_metrics(const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw DataError("metrics table has no rows");
  std::map<int, std::vector<EpochCandidate>> by_epoch;
  for (const auto& r : rows) {
    EpochCandidate c;
    c.epoch = r.epoch;
    c.head_id = r.head;
    c.report = r.report;
    by_epoch[r.epoch].push_back(std::move(c));
  }
  Selection sel;
  std::vector<std::pair<int, MetricReport>> epochs;
  for (const auto& [epoch, cands] : by_epoch) {
    const auto& best = select_best_head(cands);
    sel.best_head[epoch] = best.head_id;
    epochs.emplace_back(epoch, best.report);
  }
  sel.best_epoch = best_epoch_per_field(epochs);

  auto ranked = epochs;
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second.overall(kAction) > b.second.overall(kAction);
  });
  const auto add = [&](int e) {
    if (std::find(sel.candidates.begin(), sel.candidates.end(), e) == sel.candidates.end())
      sel.candidates.push_back(e);
  };
  for (int e : sel.best_epoch) add(e);
  for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) add(ranked[i].first);
  return sel;
}

Selection run_selection(const fs::path& run_dir) {
  const auto sel = select_from_metrics(read_metrics_tsv(run_dir / "metrics.tsv"));
  ojson j;
  auto& heads = j["best_head"] = ojson::object();
  for (const auto& [epoch, head] : sel.best_head) heads[std::to_string(epoch)] = head;
  for (Field f : kFields) j["best_epoch"][kFieldNames[f]] = sel.best_epoch[f];
  j["candidates"] = sel.candidates;
  write_text(run_dir / "selection.json", j.dump(2) + "\n");
  return sel;
}

std::string ensemble_config_json(const FitResult& fit, double step) {
  ojson j;
  j["normalization"] = normalization_name(fit.config.normalization);
  j["step"] = step;
  for (Field f : kFields) {
    auto& list = j["fields"][kFieldNames[f]] = ojson::array();
    for (const auto& c : fit.config.fields[f])
      list.push_back({{"candidate", c.candidate_id}, {"weight", c.weight}});
    j["fitted_mt5r"][kFieldNames[f]] = fit.fitted_mt5r[f];
  }
  return j.dump(2) + "\n";
}

EnsembleConfig parse_ensemble_config_json(const std::string& text) {
  EnsembleConfig cfg;
  try {
    const auto j = ojson::parse(text);
    cfg.normalization = parse_normalization(j.at("normalization"));
    for (Field f : kFields)
      for (const auto& c : j.at("fields").at(kFieldNames[f]))
        cfg.fields[f].push_back({c.at("candidate").get<int>(), c.at("weight").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ensemble.json: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

std::vector<int> selected_candidates(const fs::path& run_dir) {
  try {
    const auto j = ojson::parse(read_text(run_dir / "selection.json"));
    return j.at("candidates").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("selection.json: ") + e.what());
  }
}

CandidatePool load_pool(const fs::path& run_dir, const std::vector<int>& epochs, bool test) {
  CandidatePool pool;
  for (int e : epochs) pool[e] = Candidate{e, read_score_file(scores_path(run_dir, e, test))};
  return pool;
}

}  // namespace

FitResult run_ensemble(const fs::path& run_dir) {
  const auto cfg = load_run_config(run_dir);
  const auto epochs = selected_candidates(run_dir);
  const auto val = parse_annotations(cfg.val_annotations);
  const auto pool = load_pool(run_dir, epochs, false);
  FitOptions options;
  options.step = cfg.ensemble_step;
  options.normalization = cfg.normalization;
  const auto fit = fit_ensemble_weights(pool, {epochs, epochs, epochs}, val, options);
  write_text(run_dir / "ensemble.json", ensemble_config_json(fit, options.step));
  return fit;
}

Submission run_submission(const fs::path& run_dir, const fs::path& out) {
  const auto cfg = load_run_config(run_dir);
  const auto ens = parse_ensemble_config_json(read_text(run_dir / "ensemble.json"));
  std::set<int> ids;
  for (Field f : kFields)
    for (const auto& c : ens.fields[f]) ids.insert(c.candidate_id);
  const bool use_test = !cfg.test_annotations.empty();
  const auto pool = load_pool(run_dir, {ids.begin(), ids.end()}, use_test);
  Submission sub;
  sub.sls_pt = cfg.sls_pt;
  sub.sls_tl = cfg.sls_tl;
  sub.sls_td = cfg.sls_td;
  sub.results = field_ensemble(pool, ens);
  // Same order as the keyed results object in the file.
  std::sort(sub.results.begin(), sub.results.end(),
            [](const ScoreSet& a, const ScoreSet& b) { return a.narration_id < b.narration_id; });
  write_submission(sub, out);
  return sub;
}

void make_synthetic_dataset(const SyntheticDatasetOptions& o) {
  if (o.n_train < 1 || o.n_val < 1 || o.n_test < 0 || o.n_verbs < 1 || o.n_nouns < 1 ||
      o.n_verbs > kOfficialVerbClasses || o.n_nouns > kOfficialNounClasses ||
      o.n_participants < 1 || o.n_unseen_participants < 0 ||
      o.n_unseen_participants >= o.n_participants)
    throw ConfigError("synthetic dataset: invalid sizes");
  fs::create_directories(o.out_dir);
  Rng rng(derive_seed(o.seed, 0x6461746173ULL));

  // Zipf-like class frequencies give a long tail.
  const auto zipf = [](int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 1.0 / (i + 1.0);
    return std::discrete_distribution<int>(w.begin(), w.end());
  };
  auto verb_dist = zipf(o.n_verbs);
  auto noun_dist = zipf(o.n_nouns);
  std::uniform_real_distribution<double> start_dist(6.0, 600.0), length_dist(1.0, 5.0);
  const int seen_participants = o.n_participants - o.n_unseen_participants;

  const auto participant = [](int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "P%02d", i + 1);
    return std::string(buf);
  };
  const auto make_split = [&](const std::string& prefix, int n, bool allow_unseen) {
    std::vector<AnnotationRecord> out;
    std::uniform_int_distribution<int> pick(0, (allow_unseen ? o.n_participants : seen_participants) - 1);
    for (int i = 0; i < n; ++i) {
      AnnotationRecord r;
      const int p = pick(rng);
      r.participant_id = participant(p);
      r.video_id = r.participant_id + "_" + prefix;
      r.narration_id = r.video_id + "_" + std::to_string(i);
      r.start_s = std::round(start_dist(rng) * 100.0) / 100.0;
      r.stop_s = r.start_s + std::round(length_dist(rng) * 100.0) / 100.0;
      r.verb_class = verb_dist(rng);
      r.noun_class = noun_dist(rng);
      out.push_back(std::move(r));
    }
    return out;
  };
  const auto train = make_split("train", o.n_train, false);
  const auto val = make_split("val", o.n_val, true);
  const auto test = make_split("test", o.n_test, true);
  write_annotations(o.out_dir / "train.csv", train);
  write_annotations(o.out_dir / "val.csv", val);
  if (o.n_test > 0) write_annotations(o.out_dir / "test.csv", test);

  std::string unseen;
  for (int p = seen_participants; p < o.n_participants; ++p) unseen += participant(p) + "\n";
  write_text(o.out_dir / "unseen.txt", unseen);

  // Tail: the rarest classes jointly covering at most 20% of training instances.
  const auto tail_of = [&](auto key) {
    std::map<decltype(key(train.front())), int> counts;
    for (const auto& r : train) ++counts[key(r)];
    std::vector<std::pair<int, decltype(key(train.front()))>> order;
    for (const auto& [k, c] : counts) order.emplace_back(c, k);
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<decltype(key(train.front()))> tail;
    int covered = 0;
    for (const auto& [c, k] : order) {
      if (covered + c > static_cast<int>(0.2 * static_cast<double>(train.size()))) break;
      covered += c;
      tail.push_back(k);
    }
    std::sort(tail.begin(), tail.end());
    return tail;
  };
  std::string text;
  for (int v : tail_of([](const AnnotationRecord& r) { return r.verb_class; }))
    text += std::to_string(v) + "\n";
  write_text(o.out_dir / "tail_verbs.txt", text);
  text.clear();
  for (int n : tail_of([](const AnnotationRecord& r) { return r.noun_class; }))
    text += std::to_string(n) + "\n";
  write_text(o.out_dir / "tail_nouns.txt", text);
  text.clear();
  for (const auto& [v, n] : tail_of([](const AnnotationRecord& r) {
         return VerbNounPair{r.verb_class, r.noun_class};
       }))
    text += std::to_string(v) + "," + std::to_string(n) + "\n";
  write_text(o.out_dir / "tail_actions.txt", text);

  if (o.write_features) {
    const auto dir = o.out_dir / "features";
    fs::create_directories(dir);
    for (const auto* split : {&train, &val, &test})
      for (const auto& r : *split) {
        const auto fs = synth_features(r.narration_id, {r.verb_class, r.noun_class},
                                       o.features.d_model, o.features.n_obs, o.features.n_pred,
                                       o.features.seed, o.features.separability);
        write_features(fs, dir / (r.narration_id + ".feat"));
      }
  }
}

}  // namespace jfaa
