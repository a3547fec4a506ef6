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

// Acceptance checks. Prints one PASS/FAIL line per criterion; with
// arguments, runs only the named criteria. Exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "miniature.h"
#include "oracles.h"
#include "oodx/cli.hpp"
#include "oodx/oodx.hpp"

namespace oodx {
namespace {

using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

double secondsSince(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool report(const std::string& name, const Outcome& o) {
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

void info(const std::string& line) {
  std::printf("INFO %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

class WorkDir {
 public:
  explicit WorkDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("oodx_acceptance_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~WorkDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// ---- exact property checks ------------------------------------------------

Outcome aurocOracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20);
  std::uniform_int_distribution<int> size(1, 200);
  std::uniform_int_distribution<int> levels(2, 50);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<int> level(0, levels(rng));
    std::vector<double> a(static_cast<std::size_t>(size(rng))), b(static_cast<std::size_t>(size(rng)));
    for (double& x : a) x = level(rng) * 0.25;
    for (double& x : b) x = level(rng) * 0.25 - 0.5;
    if (auroc(a, b) != testing::bruteAurocExact(a, b)) ++mismatches;
  }
  const double s = secondsSince(t0);
  return {mismatches == 0 && s < 5.0, std::to_string(mismatches) + " mismatches in 1000 instances, " + fmt("%.2f s", s)};
}

Outcome gradients() {
  const auto t0 = Clock::now();
  const testing::Miniature mini = testing::makeMiniature(4);
  double worst = 0.0;
  bool skipped = false;
  for (DetectorKind k : {DetectorKind::kMsp, DetectorKind::kOdin, DetectorKind::kEnergy, DetectorKind::kMahalanobis}) {
    for (Preset p : {Preset::kBaseline, Preset::kMseNorm, Preset::kSep, Preset::kAll}) {
      bool sep_skipped = false;
      worst = std::max(worst, testing::objectiveGradientError(mini, k, p, &sep_skipped));
      skipped = skipped || sep_skipped;
    }
  }
  const double s = secondsSince(t0);
  return {worst < 1e-3 && !skipped && s < 30.0,
          "max relative error " + fmt("%.2e", worst) + " over 4 presets x 4 detectors" +
              (skipped ? ", separability term skipped" : "") + ", " + fmt("%.2f s", s)};
}

Outcome identityPipeline() {
  SyntheticSpec spec;
  spec.seed = 1;
  const DatasetBundle b = generateSynthetic(spec);
  const ClassifierHead head = trainHead(b.idTrain, b.idVal).head;
  const Index d = static_cast<Index>(b.channels());
  const ConceptMatrix c(Mat::Identity(d, d));
  const ReconstructionNet g = ReconstructionNet::inverseOf(c.matrix());
  double worst = 0.0;
  for (DetectorKind kind : {DetectorKind::kMsp, DetectorKind::kOdin, DetectorKind::kEnergy, DetectorKind::kMahalanobis}) {
    DetectorSpec ds = DetectorSpec::withDefaults(kind);
    if (kind == DetectorKind::kMahalanobis) ds.mahalanobis = fitMahalanobis(b.idTrain);
    const CalibratedDetector cd = calibrate(ds, head, b.idVal.features);
    const CompletenessResult r = evaluateCompleteness(cd, head, g, c, b.idTest, b.oodTest);
    worst = std::max({worst, std::abs(r.etaClf - 1.0), std::abs(r.etaDet - 1.0)});
  }
  return {worst <= 1e-9, "max |eta - 1| = " + fmt("%.3g", worst) + " over 4 detectors"};
}

Outcome fisherInvariance() {
  const Mat vin1 = (Mat(2, 1) << 0, 2).finished();
  const Mat vout1 = (Mat(2, 1) << 4, 6).finished();
  const SeparabilityResult hand = scatterSeparability(vin1, vout1, Ridge::absolute(0.0));
  const bool exact = hand.sw(0, 0) == 4.0 && hand.sb(0, 0) == 16.0 && hand.global == 4.0;

  std::mt19937_64 rng(21);
  const Mat scores = testing::randomMatrix(120 * 3, 5, rng);
  Mat reduced = reduceMax(scores, 3, ReduceMode::kExact).values;
  reduced.bottomRows(60).array() += 0.4;
  const Mat vin = reduced.topRows(60);
  const Mat vout = reduced.bottomRows(60);
  const double j = scatterSeparability(vin, vout, Ridge::absolute(0.0)).global;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    Mat a = testing::randomMatrix(5, 5, rng);
    while (std::abs(a.determinant()) < 1e-2) a = testing::randomMatrix(5, 5, rng);
    const double ja = scatterSeparability(vin * a, vout * a, Ridge::absolute(0.0)).global;
    ad::Tape tape;
    const double jt = ad::val(fisherSeparabilityVar(tape.constant(vin * a), tape.constant(vout * a), Ridge::absolute(0.0)))(0, 0);
    worst = std::max({worst, std::abs(ja - j) / j, std::abs(jt - j) / j});
  }
  return {exact && worst < 1e-8, std::string("1-D case ") + (exact ? "exact" : "wrong") + "; max relative deviation " +
                                     fmt("%.2e", worst) + " over 50 maps (J = " + fmt("%.4f", j) + ")"};
}

// A random game where players 0 and 1 are interchangeable and player m-1 is
// a dummy (m >= 3), with nu(empty) != 0.
std::vector<double> constructedGame(std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> table(std::size_t{1} << m);
  for (double& v : table) v = u(rng);
  for (ConceptSet s = 0; s < table.size(); ++s) {
    if ((s & 1) && !(s & 2)) table[s] = table[(s & ~ConceptSet{1}) | 2];
  }
  for (ConceptSet s = 0; s < table.size(); ++s) {
    if (s >> (m - 1) & 1) table[s] = table[s & ~(ConceptSet{1} << (m - 1))];
  }
  return table;
}

Outcome shapleyAxioms() {
  double efficiency = 0.0, symmetry = 0.0, dummy = 0.0;
  for (std::size_t m = 3; m <= 10; ++m) {
    const auto table = constructedGame(m, m);
    const ShapleyResult r = shapleyExact(m, [&](ConceptSet s) { return table[s]; });
    double sum = 0.0;
    for (double v : r.values) sum += v;
    efficiency = std::max(efficiency, std::abs(sum - (table.back() - table[0])));
    symmetry = std::max(symmetry, std::abs(r.values[0] - r.values[1]));
    dummy = std::max(dummy, std::abs(r.values[m - 1]));
  }
  const auto table = constructedGame(8, 99);
  auto nu = [&](ConceptSet s) { return table[s]; };
  const ShapleyResult exact = shapleyExact(8, nu);
  const ShapleyResult mc = shapleyMonteCarlo(8, nu, 2000, 7);
  double worst_z = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double z = std::abs(mc.values[i] - exact.values[i]) / mc.standardErrors[i];
    worst_z = std::max(worst_z, std::isfinite(z) ? z : (mc.values[i] == exact.values[i] ? 0.0 : INFINITY));
  }
  const bool pass = efficiency <= 1e-9 && symmetry <= 1e-9 && dummy <= 1e-9 && worst_z <= 3.0;
  return {pass, "efficiency " + fmt("%.1e", efficiency) + ", symmetry " + fmt("%.1e", symmetry) + ", dummy " +
                    fmt("%.1e", dummy) + " (m = 3..10); Monte Carlo max |error|/SE " + fmt("%.2f", worst_z) +
                    " at m = 8, 2000 permutations"};
}

Outcome smoothMaxBound() {
  const double alpha = 1e-3;
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> patches(1, 16);
  std::uniform_real_distribution<double> scale(1e-4, 10.0);
  long violations = 0;
  double worst_slack = 0.0;
  for (int t = 0; t < 100000; ++t) {
    const int p = patches(rng);
    const Mat v = testing::randomMatrix(p, 1, rng, scale(rng));
    const double exact = reduceMax(v, p, ReduceMode::kExact).values(0, 0);
    const double smooth = reduceMax(v, p, ReduceMode::kSmooth, alpha).values(0, 0);
    const double gap = smooth - exact;
    if (!(gap >= 0.0 && gap <= alpha * std::log(static_cast<double>(p)))) ++violations;
    worst_slack = std::max(worst_slack, gap / (alpha * std::log(std::max(p, 2))));
  }
  return {violations == 0, std::to_string(violations) + " violations in 1e5 patch sets at alpha = 1e-3 (largest gap " +
                               fmt("%.3f", worst_slack) + " of the bound)"};
}

// ---- CLI-level checks -----------------------------------------------------

RunConfig deskConfig(std::uint64_t seed, const fs::path& out) {
  RunConfig cfg;
  cfg.learn.concepts = 8;
  cfg.learn.epochs = 40;
  cfg.learn.batchSize = 64;
  cfg.applySeed(seed);
  cfg.out = out;
  return cfg;
}

RunConfig withPreset(RunConfig cfg, Preset p, const fs::path& out) {
  applyPreset(cfg.learn, p, cfg.detector);
  cfg.out = out;
  return cfg;
}

Outcome relativeBaseline() {
  WorkDir work("relsep");
  RunConfig cfg = withPreset(deskConfig(1, work.path() / "m"), Preset::kAll, work.path() / "m");
  cfg.learn.epochs = 5;
  std::ostringstream sink;
  cli::cmdLearn(cfg, std::nullopt, sink, sink);
  cfg.out = work.path() / "eval";
  const fs::path ck = work.path() / "m" / "model.ckpt";
  const Json j = cli::cmdEval(cfg, ck, ck, sink);
  const bool pass = j["jSepRelative"].is_number() && j["jSepRelative"].get<double>() == 0.0;
  return {pass, "jSepRelative of a checkpoint against itself = " + j["jSepRelative"].dump()};
}

Outcome determinism() {
  WorkDir work("determinism");
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    RunConfig cfg = withPreset(deskConfig(3, {}), Preset::kAll, work.path() / run);
    cfg.learn.epochs = 10;
    cli::cmdLearn(cfg, std::nullopt, sink, sink);
  }
  const auto a = io::readFile(work.path() / "a" / "model.ckpt");
  const auto b = io::readFile(work.path() / "b" / "model.ckpt");
  const bool same_history = io::readFile(work.path() / "a" / "history.csv") == io::readFile(work.path() / "b" / "history.csv");
  return {a == b && same_history, std::to_string(a.size()) + "-byte checkpoints " + (a == b ? "identical" : "differ") +
                                      ", history " + (same_history ? "identical" : "differs")};
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

std::vector<Outcome> tableTrends() {
  const auto t0 = Clock::now();
  WorkDir work("trends");
  std::ostringstream sink;
  const char* names[] = {"baseline", "mse-norm", "sep", "all"};
  int a = 0, b_sep = 0, b_eta = 0, c_eta = 0, c_sep = 0;
  double eta_sum[4] = {0, 0, 0, 0}, rel_sum[4] = {0, 0, 0, 0};
  for (std::uint64_t seed : kSeeds) {
    const fs::path dir = work.path() / std::to_string(seed);
    const RunConfig base = deskConfig(seed, dir / "head");
    cli::cmdTrainHead(base, sink);
    double eta[4], rel[4];
    for (int p = 0; p < 4; ++p) {
      const RunConfig cfg = withPreset(base, static_cast<Preset>(p), dir / names[p]);
      cli::cmdLearn(cfg, dir / "head" / "head.ckpt", sink, sink);
      const Json j = cli::cmdEval(cfg, dir / names[p] / "model.ckpt", dir / "baseline" / "model.ckpt", sink);
      eta[p] = j["etaDet"].get<double>();
      rel[p] = j["jSepRelative"].is_number() ? j["jSepRelative"].get<double>() : std::nan("");
      eta_sum[p] += eta[p];
      rel_sum[p] += rel[p];
    }
    a += eta[1] > eta[0];
    b_sep += rel[2] > rel[0];
    b_eta += eta[2] <= eta[0];
    c_eta += eta[3] >= std::max(eta[0], eta[2]);
    c_sep += rel[3] > 0.0;
    std::ostringstream line;
    line << "seed " << seed << " etaDet baseline/mse-norm/sep/all = " << fmt("%.4f", eta[0]) << " " << fmt("%.4f", eta[1])
         << " " << fmt("%.4f", eta[2]) << " " << fmt("%.4f", eta[3]) << "; jSepRelative sep/all = " << fmt("%.3f", rel[2])
         << " " << fmt("%.3f", rel[3]);
    info(line.str());
  }
  const double n = static_cast<double>(kSeeds.size());
  std::ostringstream mean;
  mean << "seed mean etaDet baseline/mse-norm/sep/all = " << fmt("%.4f", eta_sum[0] / n) << " " << fmt("%.4f", eta_sum[1] / n)
       << " " << fmt("%.4f", eta_sum[2] / n) << " " << fmt("%.4f", eta_sum[3] / n) << "; jSepRelative sep/all = "
       << fmt("%.3f", rel_sum[2] / n) << " " << fmt("%.3f", rel_sum[3] / n);
  info(mean.str());
  const double s = secondsSince(t0);
  auto count = [](int k) { return std::to_string(k) + "/5 seeds"; };
  return {{a >= 4, "(a) mse-norm etaDet > baseline on " + count(a)},
          {b_sep >= 4, "(b) sep jSepRelative > baseline on " + count(b_sep)},
          {b_eta >= 4, "(b) sep etaDet <= baseline on " + count(b_eta)},
          {c_eta >= 4, "(c) all etaDet >= max(baseline, sep) on " + count(c_eta)},
          {c_sep >= 4, "(c) all jSepRelative > 0 on " + count(c_sep)},
          {s < 600.0, "20 learn runs in " + fmt("%.0f s", s)}};
}

Outcome interventionTrend() {
  WorkDir work("intervention");
  std::ostringstream sink;
  int monotone = 0;
  int broadcast_monotone = 0;
  int endpoint_up = 0;
  for (std::uint64_t seed : kSeeds) {
    const fs::path dir = work.path() / std::to_string(seed);
    RunConfig cfg = withPreset(deskConfig(seed, dir), Preset::kAll, dir);
    cli::cmdLearn(cfg, std::nullopt, sink, sink);
    const DatasetBundle b = cli::loadBundle(cfg);
    const cli::LoadedModel lm = cli::loadModel(dir / "model.ckpt");
    const cli::Explanation ex = cli::explainModel(cfg, lm, b);
    auto curve = [&](InterventionEdit edit, int& counter) -> std::vector<InterventionRow> {
      cfg.edit = edit;
      const auto rows = cli::writeIntervention(cfg, lm, b, ex, dir / toString(edit));
      bool up = true;
      std::ostringstream line;
      line << "seed " << seed << " " << toString(edit) << " AUROC by K:";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        line << " " << fmt("%.4f", rows[i].aurocAfter);
        if (i > 0 && rows[i].aurocAfter < rows[i - 1].aurocAfter) up = false;
      }
      counter += up;
      info(line.str() + (up ? "" : " (not monotone)"));
      return rows;
    };
    const auto rows = curve(InterventionEdit::kRescale, monotone);
    endpoint_up += rows.back().aurocAfter > rows.front().aurocAfter;
    curve(InterventionEdit::kBroadcast, broadcast_monotone);
  }
  info("rescale edit: AUROC at K = m' above K = 0 on " + std::to_string(endpoint_up) + "/5 seeds");
  info("broadcast edit monotone on " + std::to_string(broadcast_monotone) + "/5 seeds");
  return {monotone >= 4, "AUROC non-decreasing in K = 0..m' on " + std::to_string(monotone) + "/5 seeds (rescale edit)"};
}

}  // namespace
}  // namespace oodx

int main(int argc, char** argv) {
  using namespace oodx;
  const std::vector<std::pair<std::string, std::function<std::vector<Outcome>()>>> criteria = {
      {"auroc-oracle", [] { return std::vector<Outcome>{aurocOracle()}; }},
      {"gradient", [] { return std::vector<Outcome>{gradients()}; }},
      {"identity-completeness", [] { return std::vector<Outcome>{identityPipeline()}; }},
      {"fisher-invariance", [] { return std::vector<Outcome>{fisherInvariance()}; }},
      {"shapley-axioms", [] { return std::vector<Outcome>{shapleyAxioms()}; }},
      {"smooth-max-bound", [] { return std::vector<Outcome>{smoothMaxBound()}; }},
      {"relative-separability-baseline", [] { return std::vector<Outcome>{relativeBaseline()}; }},
      {"table-trends", [] { return tableTrends(); }},
      {"intervention-trend", [] { return std::vector<Outcome>{interventionTrend()}; }},
      {"determinism", [] { return std::vector<Outcome>{determinism()}; }},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted) {
    bool known = false;
    for (const auto& [name, fn] : criteria) known = known || name == w;
    if (!known) {
      std::fprintf(stderr, "unknown criterion '%s'\n", w.c_str());
      return 2;
    }
  }
  bool all_pass = true;
  for (const auto& [name, fn] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    try {
      for (const Outcome& o : fn()) all_pass = report(name, o) && all_pass;
    } catch (const std::exception& e) {
      all_pass = report(name, {false, std::string("error: ") + e.what()}) && all_pass;
    }
  }
  return all_pass ? 0 : 1;
}
