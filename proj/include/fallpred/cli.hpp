#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fallpred/classifier.hpp"
#include "fallpred/dataset.hpp"
#include "fallpred/error.hpp"
#include "fallpred/ingest.hpp"
#include "fallpred/pipeline.hpp"
#include "fallpred/predictor.hpp"
#include "fallpred/report.hpp"
#include "fallpred/vectorize.hpp"

namespace fallpred::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kIoFailure = 1, kParseFailure = 2, kConfigFailure = 3, kCheckFailed = 4 };

inline constexpr const char* kDataDirEnv = "FALLPRED_DATA_DIR";
inline constexpr const char* kAnnotationFile = "annotations.csv";

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

/// `dir/stem.suffix` next to `path`, e.g. model.json -> model.loss.csv.
inline fs::path sibling(const fs::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

inline nlohmann::json read_json(const fs::path& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

struct Corpus {
  std::vector<TrackedSequence> segments;
  std::vector<VideoAnnotation> annotations;
  std::vector<std::string> files;
};

/// Every `*.json` keypoint file in `dir` (sorted by name) plus the optional
/// annotation file.
inline Corpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory " + dir.string() + " does not exist");
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json" &&
        entry.path().filename().string().find("manifest") == std::string::npos) {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  Corpus c;
  for (const auto& p : paths) {
    try {
      for (auto& s : load_segments(read_file(p), p.stem().string())) c.segments.push_back(std::move(s));
    } catch (const ParseError& e) {
      throw ParseError(p.filename().string() + ": " + e.what());
    }
    c.files.push_back(p.filename().string());
  }
  if (paths.empty()) throw IoError("no keypoint files (*.json) in " + dir.string());
  const auto ann_path = dir / kAnnotationFile;
  if (fs::exists(ann_path)) {
    std::ifstream in(ann_path);
    c.annotations = parse_annotations(in);
  }
  return c;
}

enum class Part { kTrain, kTest, kAll };

struct SplitChoice {
  std::string mode = "grouped";  // grouped | sample | none
  std::uint64_t seed = 1;
};

inline std::vector<TrackedSequence> select_part(const std::vector<TrackedSequence>& segments,
                                                const SplitChoice& choice, Part part) {
  if (choice.mode == "none" || part == Part::kAll) return segments;
  SplitMode mode;
  if (choice.mode == "grouped") {
    mode = SplitMode::kGroupedBySource;
  } else if (choice.mode == "sample") {
    mode = SplitMode::kPerSample;
  } else {
    throw ConfigError("unknown split mode '" + choice.mode + "' (expected grouped, sample or none)");
  }
  auto s = split<TrackedSequence>(segments, choice.seed, [](const TrackedSequence& t) { return t.source_id; }, mode);
  return part == Part::kTrain ? s.train : s.test;
}

inline std::vector<PoseVectorSequence> vectorize_all(std::span<const TrackedSequence> segments) {
  std::vector<PoseVectorSequence> out;
  for (const auto& s : segments) out.push_back(vectorize_sequence(s));
  return out;
}

// ---------------------------------------------------------------------------
// Manifest helpers

/// Snapshot of a subcommand's effective option values.
inline nlohmann::json option_snapshot(const CLI::App& app) {
  nlohmann::json j = nlohmann::json::object();
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? nlohmann::json(r.front()) : nlohmann::json(r);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

class ManifestScope {
 public:
  ManifestScope(std::string command, const CLI::App& app)
      : start_(std::chrono::steady_clock::now()) {
    m_.command = std::move(command);
    m_.config = option_snapshot(app);
    m_.started_at = utc_timestamp();
  }
  RunManifest& operator*() { return m_; }
  RunManifest* operator->() { return &m_; }

  void write(const fs::path& path) {
    m_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file(path, to_json(m_).dump(2) + "\n");
  }

 private:
  RunManifest m_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Commands

struct SynthArgs {
  fs::path out;
  CorpusOptions corpus;
  std::vector<std::string> kinds;
};

inline int cmd_synth(SynthArgs a, const CLI::App& app, std::ostream& out) {
  ManifestScope manifest("synth", app);
  if (!a.kinds.empty()) {
    a.corpus.kinds.clear();
    for (const auto& k : a.kinds) a.corpus.kinds.push_back(parse_motion_kind(k));
  }
  const auto videos = synth_corpus(a.corpus);
  std::vector<VideoAnnotation> anns;
  for (const auto& v : videos) {
    const auto path = a.out / (v.sequence.source_id + ".json");
    write_file(path, write_pose_file(to_pose_file(v.sequence)));
    manifest->outputs.push_back(path.string());
    anns.push_back(v.annotation);
  }
  std::ostringstream ss;
  write_annotations(ss, anns);
  write_file(a.out / kAnnotationFile, ss.str());
  manifest->outputs.push_back((a.out / kAnnotationFile).string());
  manifest->seeds["corpus"] = a.corpus.seed;
  manifest->results["sequences"] = videos.size();
  manifest.write(a.out / "manifest.json");
  out << "wrote " << videos.size() << " sequences to " << a.out.string() << "\n";
  return kOk;
}

struct VectorizeArgs {
  fs::path input;
  fs::path out;
};

inline int cmd_vectorize(const VectorizeArgs& a, const CLI::App& app, std::ostream& out) {
  ManifestScope manifest("vectorize", app);
  manifest->inputs.push_back(a.input.string());
  std::ostringstream ss;
  for (const auto& seg : load_segments(read_file(a.input), a.input.stem().string())) {
    ss << "# source " << seg.source_id << " track " << seg.track_id << "\n";
    write_vector_table(ss, vectorize_sequence(seg));
  }
  if (a.out.empty()) {
    out << ss.str();
    manifest.write("fallpred-vectorize.manifest.json");
  } else {
    write_file(a.out, ss.str());
    manifest->outputs.push_back(a.out.string());
    manifest.write(sibling(a.out, ".manifest.json"));
  }
  return kOk;
}

struct TrainingArgs {
  fs::path data;
  fs::path out;
  SplitChoice split;
  TrainOptions train;
  bool quiet = false;
};

inline void attach_progress(TrainOptions& o, bool quiet, std::ostream& log) {
  if (quiet) return;
  o.on_epoch = [&log](std::size_t epoch, double loss) { log << "epoch " << epoch << " loss " << loss << "\n"; };
}

inline void write_curve(const fs::path& model_path, const TrainReport& report, const std::string& title,
                        RunManifest& manifest) {
  std::ostringstream table;
  write_loss_table(table, report.curve);
  const auto csv = sibling(model_path, ".loss.csv");
  write_file(csv, table.str());
  PlotSeries s{"train loss", {}};
  for (const auto& p : report.curve) s.points.emplace_back(static_cast<double>(p.step), p.loss);
  const auto svg = sibling(model_path, ".loss.svg");
  write_file(svg, svg_line_plot({s}, title, "step", "loss"));
  manifest.outputs.push_back(csv.string());
  manifest.outputs.push_back(svg.string());
}

struct PredictorArgs : TrainingArgs {
  PredictorConfig config;
  std::size_t stride = 1;
  fs::path resume;
  bool overfit = false;
};

inline constexpr double kOverfitTarget = 1e-3;

inline int cmd_train_predictor(PredictorArgs a, const CLI::App& app, std::ostream& out, std::ostream& log) {
  ManifestScope manifest("train-predictor", app);
  a.config.validate();
  const auto corpus = load_corpus(a.data);
  manifest->inputs = corpus.files;
  const auto train_segs = select_part(corpus.segments, a.split, a.overfit ? Part::kAll : Part::kTrain);
  auto windows = make_training_windows(vectorize_all(train_segs), a.config, a.stride);
  if (windows.empty()) throw DataError("no segment is long enough for t_obs + t_pred frames");
  if (a.overfit) {
    windows.resize(1);
    a.train.batch_size = 1;
    a.train.plateau_epochs = 0;
    a.train.target_loss = kOverfitTarget;
    if (a.train.max_steps == 0) a.train.max_steps = 2000;
    a.train.epochs = a.train.max_steps;
  }
  std::optional<PredictorParams> initial;
  if (!a.resume.empty()) {
    initial = predictor_from_json(read_json(a.resume));
    manifest->inputs.push_back(a.resume.string());
  }
  attach_progress(a.train, a.quiet, log);
  const auto result = train_predictor(windows, a.config, a.train, initial ? &*initial : nullptr);

  nlohmann::json training = a.train;
  training["windows"] = windows.size();
  training["stride"] = a.stride;
  training["steps"] = result.report.steps;
  write_file(a.out, predictor_to_json(result.params, training).dump() + "\n");
  manifest->outputs.push_back(a.out.string());
  write_curve(a.out, result.report, "predictor training loss", *manifest);
  manifest->seeds["init_and_shuffle"] = a.train.seed;
  manifest->seeds["split"] = a.split.seed;
  manifest->results["steps"] = result.report.steps;
  manifest->results["windows"] = windows.size();
  if (!result.report.curve.empty()) manifest->results["final_epoch_loss"] = result.report.curve.back().loss;

  int code = kOk;
  if (a.overfit) {
    const double mse = window_loss(result.params, windows.front());
    const bool ok = mse < kOverfitTarget;
    manifest->results["overfit_mse"] = mse;
    out << "overfit mse " << mse << " after " << result.report.steps << " steps: " << (ok ? "PASS" : "FAIL") << "\n";
    if (!ok) code = kCheckFailed;
  } else if (a.split.mode != "none") {
    const auto test_windows =
        make_training_windows(vectorize_all(select_part(corpus.segments, a.split, Part::kTest)), a.config, a.stride);
    if (!test_windows.empty()) {
      const double m = evaluate_mcs(result.params, test_windows);
      manifest->results["heldout_mcs"] = m;
      out << "held-out MCS " << m << " over " << test_windows.size() << " windows\n";
    }
  }
  out << "trained predictor in " << result.report.steps << " steps -> " << a.out.string() << "\n";
  manifest.write(sibling(a.out, ".manifest.json"));
  return code;
}

struct ClassifierArgs : TrainingArgs {
  std::string principle = "p3";
};

inline std::vector<LabeledPose> labeled_corpus(const std::vector<TrackedSequence>& segs,
                                               const std::vector<VideoAnnotation>& anns, AnnotationPrinciple p) {
  if (anns.empty()) throw DataError(std::string("the data directory has no ") + kAnnotationFile);
  return labeled_poses(segs, index_annotations(anns), p);
}

inline int cmd_train_classifier(ClassifierArgs a, const CLI::App& app, std::ostream& out, std::ostream& log) {
  ManifestScope manifest("train-classifier", app);
  const auto principle = parse_principle(a.principle);
  const auto corpus = load_corpus(a.data);
  manifest->inputs = corpus.files;
  const auto data = labeled_corpus(select_part(corpus.segments, a.split, Part::kTrain), corpus.annotations, principle);
  attach_progress(a.train, a.quiet, log);
  const auto result = train_classifier(data, a.train);

  nlohmann::json training = a.train;
  training["principle"] = to_string(principle);
  training["samples"] = result.used_samples;
  training["steps"] = result.report.steps;
  write_file(a.out, classifier_to_json(result.params, training).dump() + "\n");
  manifest->outputs.push_back(a.out.string());
  write_curve(a.out, result.report, "classifier training loss", *manifest);
  manifest->seeds["init_and_shuffle"] = a.train.seed;
  manifest->seeds["split"] = a.split.seed;
  manifest->results["samples"] = result.used_samples;
  manifest->results["steps"] = result.report.steps;
  std::size_t correct = 0;
  for (const auto* s : trainable_samples(data)) correct += classify(result.params, s->vector).label == s->label;
  const double acc = static_cast<double>(correct) / static_cast<double>(result.used_samples);
  manifest->results["train_accuracy"] = acc;
  out << "trained classifier on " << result.used_samples << " frames (" << to_string(principle)
      << "), train accuracy " << acc << " -> " << a.out.string() << "\n";
  manifest.write(sibling(a.out, ".manifest.json"));
  return kOk;
}

struct EvalArgs {
  fs::path data;
  fs::path predictor;
  fs::path classifier;
  fs::path out_dir;
  std::string mode = "both";
  std::string principle = "p3";
  std::string part = "test";
  SplitChoice split;
  bool emit_unknowns = false;
};

inline Part parse_part(const std::string& s) {
  if (s == "train") return Part::kTrain;
  if (s == "test") return Part::kTest;
  if (s == "all") return Part::kAll;
  throw ConfigError("unknown data part '" + s + "' (expected train, test or all)");
}

inline void check_mode(const std::string& mode) {
  if (mode != "direct" && mode != "forecast" && mode != "both") {
    throw ConfigError("unknown mode '" + mode + "' (expected direct, forecast or both)");
  }
}

inline std::vector<FrameVerdict> without_unknowns(std::vector<FrameVerdict> v) {
  std::erase_if(v, [](const FrameVerdict& x) { return x.label == FallLabel::kUnknown; });
  return v;
}

inline std::string verdict_text(std::span<const FrameVerdict> v) {
  std::ostringstream ss;
  write_verdicts(ss, v);
  return ss.str();
}

inline int cmd_eval(const EvalArgs& a, const CLI::App& app, std::ostream& out) {
  ManifestScope manifest("eval", app);
  check_mode(a.mode);
  const auto principle = parse_principle(a.principle);
  const auto corpus = load_corpus(a.data);
  manifest->inputs = corpus.files;
  if (corpus.annotations.empty()) throw DataError(std::string("the data directory has no ") + kAnnotationFile);
  const auto segs = prepare_segments(select_part(corpus.segments, a.split, parse_part(a.part)));
  const auto classifier = classifier_from_json(read_json(a.classifier));
  manifest->inputs.push_back(a.classifier.string());
  const auto anns = index_annotations(corpus.annotations);
  const AnnotationTruth truth{&anns, principle};

  // Metrics always see Unknown verdicts; the verdict files follow --emit-unknowns.
  std::vector<FrameVerdict> direct, forecast;
  std::optional<PredictorParams> predictor;
  if (a.mode != "direct") {
    predictor = predictor_from_json(read_json(a.predictor));
    manifest->inputs.push_back(a.predictor.string());
    forecast = run_forecast_pipeline(*predictor, classifier, PipelineConfig{predictor->config, true}, segs);
  }
  if (a.mode != "forecast") direct = run_direct_pipeline(classifier, PipelineConfig{{}, true}, segs);

  std::vector<std::pair<std::string, Metrics>> rows;
  nlohmann::json results = nlohmann::json::object();
  if (a.mode == "both") {
    const auto cmp = compare_modes(direct, forecast, truth);
    rows = {{"Model_cls", cmp.direct}, {"Model_pred+cls", cmp.forecast}};
    results["common_frames"] = cmp.common_frames;
  } else if (a.mode == "direct") {
    rows = {{"Model_cls", evaluate_verdicts(std::span<const FrameVerdict>(direct), truth)}};
  } else {
    rows = {{"Model_pred+cls", evaluate_verdicts(std::span<const FrameVerdict>(forecast), truth)}};
  }
  for (const auto& [name, m] : rows) results[name] = to_json(m);
  results["principle"] = to_string(principle);
  results["segments"] = segs.size();

  std::ostringstream table;
  write_metrics_table(table, rows);
  out << table.str();
  if (!a.out_dir.empty()) {
    write_file(a.out_dir / "metrics.md", table.str());
    write_file(a.out_dir / "metrics.json", results.dump(2) + "\n");
    manifest->outputs.push_back((a.out_dir / "metrics.md").string());
    manifest->outputs.push_back((a.out_dir / "metrics.json").string());
    auto emit = [&](const char* name, const std::vector<FrameVerdict>& v) {
      if (v.empty()) return;
      const auto path = a.out_dir / name;
      write_file(path, verdict_text(a.emit_unknowns ? v : without_unknowns(v)));
      manifest->outputs.push_back(path.string());
    };
    emit("verdicts_direct.csv", direct);
    emit("verdicts_forecast.csv", forecast);
  }
  manifest->results = results;
  manifest->seeds["split"] = a.split.seed;
  manifest.write(a.out_dir.empty() ? fs::path("fallpred-eval.manifest.json") : a.out_dir / "manifest.json");
  return kOk;
}

struct InferArgs {
  fs::path input;
  fs::path predictor;
  fs::path classifier;
  fs::path out;
  std::string mode = "forecast";
  bool emit_unknowns = false;
};

inline int cmd_infer(const InferArgs& a, const CLI::App& app, std::ostream& out) {
  ManifestScope manifest("infer", app);
  check_mode(a.mode);
  const auto segs = prepare_segments(load_segments(read_file(a.input), a.input.stem().string()));
  manifest->inputs = {a.input.string(), a.classifier.string()};
  const auto classifier = classifier_from_json(read_json(a.classifier));
  std::vector<FrameVerdict> verdicts;
  if (a.mode != "forecast") verdicts = run_direct_pipeline(classifier, PipelineConfig{{}, a.emit_unknowns}, segs);
  if (a.mode != "direct") {
    const auto predictor = predictor_from_json(read_json(a.predictor));
    manifest->inputs.push_back(a.predictor.string());
    auto f = run_forecast_pipeline(predictor, classifier, PipelineConfig{predictor.config, a.emit_unknowns}, segs);
    verdicts.insert(verdicts.end(), f.begin(), f.end());
  }
  const auto text = verdict_text(verdicts);
  manifest->results["verdicts"] = verdicts.size();
  manifest->results["segments"] = segs.size();
  if (a.out.empty()) {
    out << text;
    manifest.write("fallpred-infer.manifest.json");
  } else {
    write_file(a.out, text);
    manifest->outputs.push_back(a.out.string());
    manifest.write(sibling(a.out, ".manifest.json"));
  }
  return kOk;
}

struct GradcheckArgs {
  PredictorConfig config{4, 4, 2, 8};
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  double step = 1e-5;
  bool corrupt = false;
  bool skip_classifier = false;
  fs::path manifest;
};

inline PoseVector random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  PoseVector v{};
  for (std::size_t c = 0; c < kNumConnections; ++c) {
    const double t = angle(rng);
    v[2 * c] = std::cos(t);
    v[2 * c + 1] = std::sin(t);
  }
  return v;
}

/// Compares reverse-mode gradients with central differences on the
/// seq2seq predictor (+ projection + MSE) and the classifier (+ cross-entropy).
/// `corrupt` perturbs one analytic coordinate, which must make the check fail.
inline int cmd_gradcheck(const GradcheckArgs& a, const CLI::App& app, std::ostream& out) {
  ManifestScope manifest("gradcheck", app);
  std::mt19937_64 rng(a.seed);
  bool pass = true;
  auto report = [&](const char* what, const nn::GradCheckResult& r) {
    const bool ok = r.max_rel_error < a.tolerance;
    pass = pass && ok;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-10s params %zu  max rel. error %.3e (analytic %.6e, numeric %.6e)  %s\n", what,
                  r.checked, r.max_rel_error, r.analytic_at_worst, r.numeric_at_worst, ok ? "PASS" : "FAIL");
    out << buf;
    manifest->results[what] = {{"max_rel_error", r.max_rel_error}, {"params", r.checked}, {"pass", ok}};
  };
  auto corrupt = [&](auto& grad) {
    if (!a.corrupt) return;
    auto slots = nn::buffers(grad);
    slots.front()[0] += 0.1 + 0.5 * std::abs(slots.front()[0]);
  };

  const auto predictor = make_predictor(a.config, a.seed);
  TrainingWindow w;
  for (std::size_t k = 0; k < a.config.t_obs; ++k) w.obs.push_back(random_pose(rng));
  for (std::size_t k = 0; k < a.config.t_pred; ++k) w.target.push_back(random_pose(rng));
  auto pg = nn::zeros_like(predictor);
  window_loss_and_grad(predictor, w, pg);
  corrupt(pg);
  report("predictor",
         nn::grad_check([&](const PredictorParams& q) { return window_loss(q, w); }, predictor, pg, a.step));

  if (!a.skip_classifier) {
    const auto classifier = make_classifier(a.seed);
    const auto v = random_pose(rng);
    auto cg = nn::zeros_like(classifier);
    classifier_loss_and_grad(classifier, v, 1, cg);
    corrupt(cg);
    report("classifier",
           nn::grad_check([&](const ClassifierParams& q) { return classifier_loss(q, v, 1); }, classifier, cg, a.step));
  }
  manifest->seeds["init_and_inputs"] = a.seed;
  manifest->results["pass"] = pass;
  manifest.write(a.manifest.empty() ? fs::path("fallpred-gradcheck.manifest.json") : a.manifest);
  out << (pass ? "gradient check passed\n" : "gradient check FAILED\n");
  return pass ? kOk : kCheckFailed;
}

struct SweepArgs : TrainingArgs {
  std::vector<std::string> pairs{"25:50", "25:25", "10:50"};
  std::vector<std::size_t> np_values{1, 2, 5, 10};
  std::size_t hidden = 64;
  std::size_t stride = 5;
};

/// Held-out MCS against n_p for several (t_obs, t_pred) pairs.
inline int cmd_sweep(SweepArgs a, const CLI::App& app, std::ostream& out, std::ostream& log) {
  ManifestScope manifest("sweep", app);
  const auto corpus = load_corpus(a.data);
  manifest->inputs = corpus.files;
  const auto train = vectorize_all(select_part(corpus.segments, a.split, Part::kTrain));
  const auto test = vectorize_all(select_part(corpus.segments, a.split, Part::kTest));
  attach_progress(a.train, a.quiet, log);
  std::vector<PlotSeries> series;
  std::ostringstream csv;
  csv << "t_obs,t_pred,n_p,mcs\n";
  for (const auto& pair : a.pairs) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos) throw ConfigError("pair '" + pair + "' is not t_obs:t_pred");
    PredictorConfig c;
    try {
      c.t_obs = std::stoul(pair.substr(0, colon));
      c.t_pred = std::stoul(pair.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("pair '" + pair + "' is not t_obs:t_pred");
    }
    c.hidden_size = a.hidden;
    PlotSeries s{"(" + std::to_string(c.t_obs) + ", " + std::to_string(c.t_pred) + ")", {}};
    for (std::size_t np : a.np_values) {
      c.n_p = np;
      c.validate();
      const auto windows = make_training_windows(train, c, a.stride);
      const auto held = make_training_windows(test, c, a.stride);
      if (windows.empty() || held.empty()) throw DataError("sequences too short for pair " + pair);
      const auto r = train_predictor(windows, c, a.train);
      const double m = evaluate_mcs(r.params, held);
      s.points.emplace_back(static_cast<double>(np), m);
      csv << c.t_obs << ',' << c.t_pred << ',' << np << ',' << m << '\n';
      out << "t_obs " << c.t_obs << " t_pred " << c.t_pred << " n_p " << np << " MCS " << m << "\n";
      manifest->results[pair + "/" + std::to_string(np)] = m;
    }
    series.push_back(std::move(s));
  }
  write_file(a.out, svg_line_plot(series, "MCS by packing size", "n_p", "MCS"));
  write_file(sibling(a.out, ".csv"), csv.str());
  manifest->outputs = {a.out.string(), sibling(a.out, ".csv").string()};
  manifest->seeds["init_and_shuffle"] = a.train.seed;
  manifest->seeds["split"] = a.split.seed;
  manifest.write(sibling(a.out, ".manifest.json"));
  return kOk;
}

// ---------------------------------------------------------------------------
// Argument parsing

namespace detail {

inline void add_training_flags(CLI::App* sub, TrainingArgs& a, bool needs_out = true) {
  sub->add_option("--data", a.data, "Directory of keypoint files and annotations.csv")
      ->envname(kDataDirEnv)
      ->required();
  if (needs_out) sub->add_option("--out", a.out, "Output model file")->required();
  sub->add_option("--seed", a.train.seed, "Seed for initialization and shuffling")->capture_default_str();
  sub->add_option("--epochs", a.train.epochs, "Epoch cap")->capture_default_str();
  sub->add_option("--batch", a.train.batch_size, "Mini-batch size")->capture_default_str();
  sub->add_option("--lr", a.train.lr, "Adam learning rate")->capture_default_str();
  sub->add_option("--clip", a.train.clip_norm, "Global gradient-norm clip (0 disables)")->capture_default_str();
  sub->add_option("--max-steps", a.train.max_steps, "Optimizer step cap (0 = none)")->capture_default_str();
  sub->add_option("--plateau-epochs", a.train.plateau_epochs, "Plateau window in epochs (0 disables)")
      ->capture_default_str();
  sub->add_option("--plateau-tol", a.train.plateau_tolerance, "Relative improvement counted as a plateau")
      ->capture_default_str();
  sub->add_option("--split", a.split.mode, "grouped, sample or none")->capture_default_str();
  sub->add_option("--split-seed", a.split.seed, "Seed of the 7:3 split")->capture_default_str();
  sub->add_flag("--quiet", a.quiet, "No per-epoch log");
}

inline void add_predictor_flags(CLI::App* sub, PredictorConfig& c) {
  sub->add_option("--t-obs", c.t_obs, "Observed frames")->capture_default_str();
  sub->add_option("--t-pred", c.t_pred, "Forecast frames")->capture_default_str();
  sub->add_option("--np", c.n_p, "Vectors per package")->capture_default_str();
  sub->add_option("--hidden", c.hidden_size, "LSTM hidden size")->capture_default_str();
}

}  // namespace detail

/// Parses and runs one command line. Returns the process exit code.
inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Fall prediction from 2D keypoint sequences", "fallpred"};
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Write a synthetic keypoint corpus with annotations");
  s_synth->add_option("--out", synth.out, "Output directory")->required();
  s_synth->add_option("--count", synth.corpus.count, "Number of sequences")->capture_default_str();
  s_synth->add_option("--kinds", synth.kinds, "Motion kinds, cycled in order")
      ->delimiter(',')
      ->default_str("upright_idle,walk,fall_and_lie,fall_and_rise");
  s_synth->add_option("--duration", synth.corpus.duration, "Frames per sequence")->capture_default_str();
  s_synth->add_option("--noise", synth.corpus.noise_std, "Gaussian pixel noise")->capture_default_str();
  s_synth->add_option("--occlusion", synth.corpus.occlusion_rate, "Per-keypoint occlusion rate")
      ->capture_default_str();
  s_synth->add_option("--seed", synth.corpus.seed, "Corpus seed")->capture_default_str();
  s_synth->add_option("--prefix", synth.corpus.prefix, "Source id prefix")->capture_default_str();

  VectorizeArgs vec;
  auto* s_vec = app.add_subcommand("vectorize", "Dump pose vectors of a keypoint file");
  s_vec->add_option("--input", vec.input, "Keypoint file")->required();
  s_vec->add_option("--out", vec.out, "Output table (stdout when omitted)");

  PredictorArgs pred;
  auto* s_pred = app.add_subcommand("train-predictor", "Train the pose forecaster");
  detail::add_training_flags(s_pred, pred);
  detail::add_predictor_flags(s_pred, pred.config);
  s_pred->add_option("--stride", pred.stride, "Spacing of training window starts")->capture_default_str();
  s_pred->add_option("--resume", pred.resume, "Continue from this model file");
  s_pred->add_flag("--overfit", pred.overfit, "Train on one window until MSE < 1e-3 (at most --max-steps, 2000)");

  ClassifierArgs cls;
  auto* s_cls = app.add_subcommand("train-classifier", "Train the fall classifier on labeled frames");
  detail::add_training_flags(s_cls, cls);
  s_cls->add_option("--principle", cls.principle, "Annotation principle p1, p2 or p3")->capture_default_str();

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "Frame-level metrics of the direct and forecast pipelines");
  s_eval->add_option("--data", ev.data, "Directory of keypoint files and annotations.csv")
      ->envname(kDataDirEnv)
      ->required();
  s_eval->add_option("--predictor", ev.predictor, "Predictor model file");
  s_eval->add_option("--classifier", ev.classifier, "Classifier model file")->required();
  s_eval->add_option("--out-dir", ev.out_dir, "Directory for metrics and verdict files");
  s_eval->add_option("--mode", ev.mode, "direct, forecast or both")->capture_default_str();
  s_eval->add_option("--principle", ev.principle, "Annotation principle p1, p2 or p3")->capture_default_str();
  s_eval->add_option("--part", ev.part, "train, test or all")->capture_default_str();
  s_eval->add_option("--split", ev.split.mode, "grouped, sample or none")->capture_default_str();
  s_eval->add_option("--split-seed", ev.split.seed, "Seed of the 7:3 split")->capture_default_str();
  s_eval->add_flag("--emit-unknowns", ev.emit_unknowns, "Keep Unknown rows in the verdict files");

  InferArgs inf;
  auto* s_inf = app.add_subcommand("infer", "Verdict stream for one keypoint file");
  s_inf->add_option("--input", inf.input, "Keypoint file")->required();
  s_inf->add_option("--predictor", inf.predictor, "Predictor model file");
  s_inf->add_option("--classifier", inf.classifier, "Classifier model file")->required();
  s_inf->add_option("--out", inf.out, "Output verdict table (stdout when omitted)");
  s_inf->add_option("--mode", inf.mode, "direct, forecast or both")->capture_default_str();
  s_inf->add_flag("--emit-unknowns", inf.emit_unknowns, "Include Unknown rows");

  GradcheckArgs gc;
  auto* s_gc = app.add_subcommand("gradcheck", "Finite-difference check of reverse-mode gradients");
  detail::add_predictor_flags(s_gc, gc.config);
  s_gc->get_option("--hidden")->default_val(8);
  s_gc->get_option("--np")->default_val(2);
  s_gc->get_option("--t-obs")->default_val(4);
  s_gc->get_option("--t-pred")->default_val(4);
  s_gc->add_option("--seed", gc.seed, "Seed for weights and inputs")->capture_default_str();
  s_gc->add_option("--tolerance", gc.tolerance, "Largest accepted relative error")->capture_default_str();
  s_gc->add_option("--step", gc.step, "Central-difference step")->capture_default_str();
  s_gc->add_flag("--corrupt", gc.corrupt, "Self-test: perturb one analytic gradient entry");
  s_gc->add_flag("--skip-classifier", gc.skip_classifier, "Check the predictor only");
  s_gc->add_option("--manifest", gc.manifest, "Manifest path");

  SweepArgs sw;
  auto* s_sw = app.add_subcommand("sweep", "Held-out MCS against n_p, written as an SVG plot");
  detail::add_training_flags(s_sw, sw);
  s_sw->add_option("--pairs", sw.pairs, "t_obs:t_pred pairs")->delimiter(',')->default_str("25:50,25:25,10:50");
  s_sw->add_option("--np-list", sw.np_values, "n_p values")->delimiter(',')->default_str("1,2,5,10");
  s_sw->add_option("--hidden", sw.hidden, "LSTM hidden size")->capture_default_str();
  s_sw->add_option("--stride", sw.stride, "Spacing of window starts")->capture_default_str();

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigFailure;
  }

  try {
    if (s_synth->parsed()) return cmd_synth(synth, *s_synth, out);
    if (s_vec->parsed()) return cmd_vectorize(vec, *s_vec, out);
    if (s_pred->parsed()) return cmd_train_predictor(pred, *s_pred, out, err);
    if (s_cls->parsed()) return cmd_train_classifier(cls, *s_cls, out, err);
    if (s_eval->parsed()) {
      if (ev.mode != "direct" && ev.predictor.empty()) throw ConfigError("--predictor is required for mode " + ev.mode);
      return cmd_eval(ev, *s_eval, out);
    }
    if (s_inf->parsed()) {
      if (inf.mode != "direct" && inf.predictor.empty()) {
        throw ConfigError("--predictor is required for mode " + inf.mode);
      }
      return cmd_infer(inf, *s_inf, out);
    }
    if (s_gc->parsed()) return cmd_gradcheck(gc, *s_gc, out);
    if (s_sw->parsed()) return cmd_sweep(sw, *s_sw, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kParseFailure;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kParseFailure;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIoFailure;
  }
  return kConfigFailure;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace fallpred::cli
