/*
 * Copyright 2026 The oodx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oodx/checkpoint.hpp"
#include "oodx/config.hpp"
#include "oodx/detectors.hpp"
#include "oodx/errors.hpp"
#include "oodx/explain.hpp"
#include "oodx/learn.hpp"
#include "oodx/metrics.hpp"
#include "oodx/model.hpp"
#include "oodx/pipeline.hpp"
#include "oodx/report.hpp"
#include "oodx/tensorio.hpp"

namespace oodx::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
  kExitShape = 5,
};

inline int exitCodeFor(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e)) return kExitConfig;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e)) return kExitIo;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const TrainingError*>(&e) ||
      dynamic_cast<const DataError*>(&e)) {
    return kExitNumeric;
  }
  if (dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const StateError*>(&e)) return kExitShape;
  return kExitFailure;
}

// Command-line overrides layered on top of the config file.
struct Options {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> baseline;
  std::optional<std::filesystem::path> head;
  std::optional<std::string> preset;
  std::optional<std::string> mode;
  std::optional<std::size_t> samples;
};

inline RunConfig resolveConfig(const Options& opt) {
  RunConfig cfg = opt.config ? loadRunConfig(*opt.config) : RunConfig{};
  if (opt.preset) {
    const PresetSelection sel = parsePreset(*opt.preset);
    if (sel.detector) cfg.detector = *sel.detector;
    applyPreset(cfg.learn, sel.preset, cfg.detector);
    cfg.preset = *opt.preset;
  }
  if (opt.mode) {
    if (*opt.mode == "exact") cfg.explain.mode = ShapleyMode::kExact;
    else if (*opt.mode == "mc") cfg.explain.mode = ShapleyMode::kMonteCarlo;
    else throw ConfigError("--mode must be 'exact' or 'mc'");
  }
  if (opt.samples) cfg.explain.samples = *opt.samples;
  if (opt.out) cfg.out = *opt.out;
  if (opt.seed) cfg.applySeed(*opt.seed);
  cfg.validate();
  return cfg;
}

inline const std::filesystem::path& requireOut(const RunConfig& cfg) {
  if (!cfg.out) throw ConfigError("missing output directory (--out)");
  return *cfg.out;
}

inline void ensureDir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline DatasetBundle loadBundle(const RunConfig& cfg) {
  if (cfg.dataDir) return readBundle(*cfg.dataDir);
  return generateSynthetic(cfg.syntheticOrDefault());
}

struct LoadedModel {
  ConceptModel model;
  CalibratedDetector detector;
};

inline void storeModel(Checkpoint& ck, const ConceptModel& m, const CalibratedDetector& cd) {
  storeHead(ck, m.head);
  storeNet(ck, m.g);
  storeConcepts(ck, m.concepts);
  storeDetector(ck, cd);
}

inline LoadedModel loadModel(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::read(path);
  LoadedModel lm{{loadHead(ck), loadNet(ck), loadConcepts(ck)}, loadDetector(ck)};
  if (lm.model.g.inputs() != lm.model.concepts.size() || lm.model.g.outputs() != lm.model.concepts.channels() ||
      lm.model.head.channels() != lm.model.concepts.channels()) {
    throw ShapeError(path.string() + ": checkpoint blocks have inconsistent shapes");
  }
  lm.detector.spec.validate();
  return lm;
}

inline void checkCompatible(const LoadedModel& lm, const DatasetBundle& b) {
  if (static_cast<std::size_t>(lm.model.head.channels()) != b.channels()) {
    throw ShapeError("checkpoint expects " + std::to_string(lm.model.head.channels()) + " channels, features have " +
                     std::to_string(b.channels()));
  }
  if (static_cast<std::uint32_t>(lm.model.head.numClasses()) != b.numClasses()) {
    throw ShapeError("checkpoint expects " + std::to_string(lm.model.head.numClasses()) + " classes, labels have " +
                     std::to_string(b.numClasses()));
  }
}

// ---- commands -----------------------------------------------------------

inline void cmdGenerate(const RunConfig& cfg, std::ostream& out) {
  const auto& dir = requireOut(cfg);
  if (cfg.dataDir) throw ConfigError("generate needs a synthetic spec, not [data] dir");
  const SyntheticSpec spec = cfg.syntheticOrDefault();
  spec.validate();
  writeBundle(generateSynthetic(spec), dir);
  out << "wrote synthetic bundle to " << dir.string() << "\n";
}

inline ClassifierHead trainHeadFor(const RunConfig& cfg, const DatasetBundle& b, std::ostream& out) {
  const HeadTrainResult r = trainHead(b.idTrain, b.idVal, cfg.head);
  out << "head validation accuracy " << formatReal(r.validationAccuracy) << "\n";
  return quantized(r.head);
}

inline void cmdTrainHead(const RunConfig& cfg, std::ostream& out) {
  const auto& dir = requireOut(cfg);
  const DatasetBundle b = loadBundle(cfg);
  const ClassifierHead head = trainHeadFor(cfg, b, out);
  ensureDir(dir);
  Checkpoint ck;
  storeHead(ck, head);
  ck.write(dir / "head.ckpt");
}

// Trains (or loads) the head, learns concepts, removes near-duplicates and
// writes model.ckpt and history.csv. Every stored parameter is rounded to
// f32 before use so that reloaded models behave exactly like this run.
inline void cmdLearn(const RunConfig& cfg, const std::optional<std::filesystem::path>& head_path, std::ostream& out,
                     std::ostream& log) {
  const auto& dir = requireOut(cfg);
  const DatasetBundle b = loadBundle(cfg);
  ClassifierHead head;
  if (head_path) {
    head = loadHead(Checkpoint::read(*head_path));
    if (static_cast<std::size_t>(head.channels()) != b.channels() ||
        static_cast<std::uint32_t>(head.numClasses()) != b.numClasses()) {
      throw ShapeError("head checkpoint does not match the features");
    }
  } else {
    head = trainHeadFor(cfg, b, out);
  }
  DetectorSpec spec = cfg.detectorSpec();
  if (spec.kind == DetectorKind::kMahalanobis) {
    MahalanobisStats stats = fitMahalanobis(b.idTrain, cfg.mahalanobisRidge);
    stats.means = quantized(stats.means);
    stats.precision = quantized(stats.precision);
    stats.ridge = static_cast<float>(stats.ridge);
    spec.mahalanobis = std::move(stats);
  }
  spec.temperature = static_cast<float>(spec.temperature);

  const TrainResult r = trainConcepts(cfg.learn, b, head, spec, [&](const std::string& msg) { log << "warning: " << msg << "\n"; });
  ConceptModel model = deduplicateModel({head, r.state.g, r.state.concepts});
  model.g = quantized(model.g);
  model.concepts = ConceptMatrix(quantized(model.concepts.matrix()));
  const CalibratedDetector cd = quantized(r.detector);

  ensureDir(dir);
  Checkpoint ck;
  storeModel(ck, model, cd);
  ck.write(dir / "model.ckpt");
  io::writeTextAtomic(dir / "history.csv", historyCsv(r.state.history));
  out << "learned " << model.concepts.size() << " concepts (" << cfg.learn.concepts << " before deduplication)\n";
}

struct Evaluation {
  CompletenessResult completeness;
  SeparabilityResult separability;
};

// Completeness on the test splits; separability of exact reduced scores over
// the pooled ID+OOD training data, grouped by the canonical detector decision
// and the concept-world predicted class.
inline Evaluation evaluateModel(const LoadedModel& lm, const DatasetBundle& b) {
  const ConceptModel& m = lm.model;
  Evaluation e;
  e.completeness = evaluateCompleteness(lm.detector, m.head, m.g, m.concepts, b.idTest, b.oodTest);
  const Index patches = static_cast<Index>(b.patches());
  Mat rows(static_cast<Index>((b.idTrain.features.samples() + b.oodTrain.samples()) * b.patches()),
           static_cast<Index>(b.channels()));
  rows << b.idTrain.features.rows(), b.oodTrain.rows();
  const Mat scores = conceptScores(m.concepts, rows);
  const ReducedScores reduced = reduceMax(scores, patches, ReduceMode::kExact);
  const std::vector<int> detected = decide(lm.detector, scoreRows(lm.detector.spec, m.head, rows, patches));
  const std::vector<std::uint32_t> predicted = argmaxRows(headLogitsFromRows(m.head, reconstruct(m.g, scores), patches));
  e.separability = separability(reduced.values, detected, predicted, b.numClasses());
  return e;
}

inline Json cmdEval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                    const std::optional<std::filesystem::path>& baseline, std::ostream& out) {
  const auto& dir = requireOut(cfg);
  const DatasetBundle b = loadBundle(cfg);
  const LoadedModel lm = loadModel(checkpoint);
  checkCompatible(lm, b);
  const Evaluation e = evaluateModel(lm, b);
  std::optional<double> relative;
  if (baseline) {
    const LoadedModel base = loadModel(*baseline);
    checkCompatible(base, b);
    const Evaluation eb = evaluateModel(base, b);
    try {
      relative = relativeSeparability(e.separability.perClass, eb.separability.perClass);
    } catch (const ArgumentError&) {
      relative = std::nullopt;
    }
  }
  const Json j = metricsJson(e.completeness, e.separability, relative);
  ensureDir(dir);
  io::writeTextAtomic(dir / "metrics.json", dumpJson(j));
  out << "etaClf " << formatReal(e.completeness.etaClf) << " etaDet " << formatReal(e.completeness.etaDet) << "\n";
  return j;
}

struct Explanation {
  std::vector<ShapleyResult> perClass;
  std::vector<std::vector<Index>> ranking;
  ConceptProfile profiles;
  Json cache;
};

inline Explanation explainModel(const RunConfig& cfg, const LoadedModel& lm, const DatasetBundle& b) {
  CharacteristicConfig cc = cfg.explain.characteristic;
  cc.lambdaMse = cfg.learn.lambdaMse;
  cc.lambdaNorm = cfg.learn.lambdaNorm;
  DetectionCharacteristic nu(lm.detector, lm.model, b.idTest, b.oodTest, b.idTrain, b.oodTrain, cc);
  const std::size_t m = nu.concepts();
  Explanation ex;
  for (std::uint32_t y = 0; y < nu.classes(); ++y) {
    auto f = [&](ConceptSet s) { return nu(s, y); };
    ShapleyResult r = cfg.explain.mode == ShapleyMode::kExact
                          ? shapleyExact(m, f)
                          : shapleyMonteCarlo(m, f, cfg.explain.samples, cfg.seed + y);
    ex.ranking.push_back(rankConcepts(r.values));
    ex.perClass.push_back(std::move(r));
  }
  ex.cache = Json::array();
  for (ConceptSet s : [&] {
         std::vector<ConceptSet> keys;
         for (const auto& [k, v] : nu.cached(std::nullopt)) keys.push_back(k);
         return keys;
       }()) {
    const auto& v = nu.values(s);
    ex.cache.push_back(Json{{"subset", conceptSetJson(s, m)}, {"perClass", realArray(v.perClass)}, {"global", realOrNull(v.global)}});
  }
  ex.profiles = buildProfiles(lm.detector, lm.model.head, lm.model.g, lm.model.concepts, b.idVal.features, b.oodVal);
  return ex;
}

inline void writeExplanation(const RunConfig& cfg, const LoadedModel& lm, const DatasetBundle& b,
                             const Explanation& ex, const std::filesystem::path& dir) {
  Json j;
  j["concepts"] = lm.model.concepts.size();
  j["classes"] = Json::array();
  std::vector<PatternSummary> patterns;
  for (std::uint32_t y = 0; y < ex.perClass.size(); ++y) {
    j["classes"].push_back(shapleyJson(ex.perClass[y], y));
    patterns.push_back(patternSummary(y, ex.perClass[y].values, ex.profiles, cfg.explain.top));
  }
  j["characteristicCache"] = ex.cache;
  ensureDir(dir);
  io::writeTextAtomic(dir / "shapley.json", dumpJson(j));
  io::writeTextAtomic(dir / "patterns.csv", patternCsv(patterns));
  io::writeTextAtomic(dir / "nearest_patches.csv",
                      nearestPatchCsv(nearestPatches(lm.model.concepts, b.idTrain.features, cfg.explain.patchThreshold)));
}

inline std::vector<InterventionRow> writeIntervention(const RunConfig& cfg, const LoadedModel& lm,
                                                      const DatasetBundle& b, const Explanation& ex,
                                                      const std::filesystem::path& dir) {
  std::vector<std::size_t> ks = cfg.ks;
  if (ks.empty()) {
    for (std::size_t k = 0; k <= static_cast<std::size_t>(lm.model.concepts.size()); ++k) ks.push_back(k);
  }
  const auto rows = interventionCurve(lm.detector, lm.model.head, lm.model.g, lm.model.concepts, b.idTest.features,
                                      b.oodTest, ex.profiles, ex.ranking, ks, cfg.edit);
  ensureDir(dir);
  io::writeTextAtomic(dir / "intervention.csv", interventionCsv(rows));
  return rows;
}

inline void cmdExplain(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& out) {
  const auto& dir = requireOut(cfg);
  const DatasetBundle b = loadBundle(cfg);
  const LoadedModel lm = loadModel(checkpoint);
  checkCompatible(lm, b);
  const Explanation ex = explainModel(cfg, lm, b);
  writeExplanation(cfg, lm, b, ex, dir);
  out << "explained " << lm.model.concepts.size() << " concepts over " << ex.perClass.size() << " classes\n";
}

inline std::vector<InterventionRow> cmdIntervene(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                                 std::ostream& out) {
  const auto& dir = requireOut(cfg);
  const DatasetBundle b = loadBundle(cfg);
  const LoadedModel lm = loadModel(checkpoint);
  checkCompatible(lm, b);
  const auto rows = writeIntervention(cfg, lm, b, explainModel(cfg, lm, b), dir);
  out << "intervention curve with " << rows.size() << " rows\n";
  return rows;
}

// Runs eval, explain and intervene into one directory and lists the files in
// manifest.json.
inline void cmdReport(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                      const std::optional<std::filesystem::path>& baseline, std::ostream& out) {
  const auto& dir = requireOut(cfg);
  cmdEval(cfg, checkpoint, baseline, out);
  const DatasetBundle b = loadBundle(cfg);
  const LoadedModel lm = loadModel(checkpoint);
  const Explanation ex = explainModel(cfg, lm, b);
  writeExplanation(cfg, lm, b, ex, dir);
  writeIntervention(cfg, lm, b, ex, dir);
  const auto history = checkpoint.parent_path() / "history.csv";
  std::vector<std::string> files = {"metrics.json", "shapley.json", "patterns.csv", "nearest_patches.csv", "intervention.csv"};
  if (std::filesystem::exists(history)) {
    const std::vector<char> bytes = io::readFile(history);
    io::writeFileAtomic(dir / "history.csv", bytes);
    files.push_back("history.csv");
  }
  Json manifest;
  manifest["checkpoint"] = checkpoint.string();
  if (baseline) manifest["baseline"] = baseline->string();
  manifest["seed"] = cfg.seed;
  manifest["files"] = Json::array();
  for (const auto& f : files) {
    manifest["files"].push_back(Json{{"name", f}, {"bytes", std::filesystem::file_size(dir / f)}});
  }
  io::writeTextAtomic(dir / "manifest.json", dumpJson(manifest));
  out << "report written to " << dir.string() << "\n";
}

// ---- entry point --------------------------------------------------------

inline int runCli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Concept-based explanations for OOD detectors", "oodx"};
  app.require_subcommand(1, 1);
  Options opt;
  std::string config;
  std::string out_dir;
  std::string checkpoint;
  std::string baseline;
  std::string head;
  std::string preset;
  std::string mode;
  std::uint64_t seed = 0;
  std::size_t samples = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run config file (key = value, [sections])");
    sub->add_option("--seed", seed, "seed for every random component");
    sub->add_option("--out", out_dir, "output directory");
  };
  auto with_checkpoint = [&](CLI::App* sub) { sub->add_option("--checkpoint", checkpoint, "model checkpoint")->required(); };

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic ID/OOD feature bundle");
  common(generate);
  CLI::App* train_head = app.add_subcommand("train-head", "train the classifier head");
  common(train_head);
  CLI::App* learn = app.add_subcommand("learn", "learn concepts for a detector");
  common(learn);
  learn->add_option("--head", head, "head checkpoint from train-head");
  learn->add_option("--preset", preset, "baseline | mse-norm | sep | all, optionally detector-prefixed");
  CLI::App* eval = app.add_subcommand("eval", "completeness and separability metrics");
  common(eval);
  with_checkpoint(eval);
  eval->add_option("--baseline", baseline, "baseline checkpoint for relative separability");
  CLI::App* explain = app.add_subcommand("explain", "Shapley concept importance and class patterns");
  common(explain);
  with_checkpoint(explain);
  explain->add_option("--mode", mode, "exact | mc");
  explain->add_option("--samples", samples, "Monte Carlo permutations");
  CLI::App* intervene_cmd = app.add_subcommand("intervene", "counterfactual concept interventions");
  common(intervene_cmd);
  with_checkpoint(intervene_cmd);
  intervene_cmd->add_option("--mode", mode, "exact | mc");
  intervene_cmd->add_option("--samples", samples, "Monte Carlo permutations");
  CLI::App* report = app.add_subcommand("report", "eval, explain and intervene into one directory");
  common(report);
  with_checkpoint(report);
  report->add_option("--baseline", baseline, "baseline checkpoint for relative separability");
  report->add_option("--mode", mode, "exact | mc");
  report->add_option("--samples", samples, "Monte Carlo permutations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  auto given = [&](const char* name) { return sub->get_option_no_throw(name) && sub->count(name) > 0; };
  if (given("--config")) opt.config = config;
  if (given("--seed")) opt.seed = seed;
  if (given("--out")) opt.out = out_dir;
  if (given("--checkpoint")) opt.checkpoint = checkpoint;
  if (given("--baseline")) opt.baseline = baseline;
  if (given("--head")) opt.head = head;
  if (given("--preset")) opt.preset = preset;
  if (given("--mode")) opt.mode = mode;
  if (given("--samples")) opt.samples = samples;

  try {
    const RunConfig cfg = resolveConfig(opt);
    const std::string name = sub->get_name();
    if (!cfg.out) {
      err << "error: missing output directory (--out)\n" << sub->help();
      return kExitConfig;
    }
    if (name == "generate") cmdGenerate(cfg, out);
    else if (name == "train-head") cmdTrainHead(cfg, out);
    else if (name == "learn") cmdLearn(cfg, opt.head, out, err);
    else if (name == "eval") cmdEval(cfg, *opt.checkpoint, opt.baseline, out);
    else if (name == "explain") cmdExplain(cfg, *opt.checkpoint, out);
    else if (name == "intervene") cmdIntervene(cfg, *opt.checkpoint, out);
    else if (name == "report") cmdReport(cfg, *opt.checkpoint, opt.baseline, out);
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exitCodeFor(e);
  }
}

}  // namespace oodx::cli
