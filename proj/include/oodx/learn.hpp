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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "oodx/adam.hpp"
#include "oodx/autodiff.hpp"
#include "oodx/checkpoint.hpp"
#include "oodx/concepts.hpp"
#include "oodx/detectors.hpp"
#include "oodx/errors.hpp"
#include "oodx/format.hpp"
#include "oodx/metrics.hpp"
#include "oodx/model.hpp"
#include "oodx/pipeline.hpp"
#include "oodx/tensor.hpp"

namespace oodx {

enum class SeparabilityMode { kGlobal, kPerClass };

struct LearnConfig {
  Index concepts = 100;
  double lambdaExpl = 10.0;
  double lambdaMse = 0.0;
  double lambdaNorm = 0.0;
  double lambdaSep = 0.0;
  Index neighbors = 10;  // K
  double alpha = 1e-3;
  int epochs = 30;
  Index batchSize = 64;
  double learningRate = 1e-3;
  std::uint64_t seed = 0;
  Index hidden = 500;
  SeparabilityMode separabilityMode = SeparabilityMode::kGlobal;
  Ridge sepRidge;

  void validate() const {
    for (double l : {lambdaExpl, lambdaMse, lambdaNorm, lambdaSep}) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("regularizer weights must be finite and non-negative");
    }
    if (concepts < 1) throw ConfigError("concept count must be at least 1");
    if (neighbors < 1) throw ConfigError("K must be at least 1");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batchSize < 1) throw ConfigError("batch size must be positive");
    if (!(learningRate > 0.0)) throw ConfigError("learning rate must be positive");
    if (hidden < 1) throw ConfigError("hidden width must be positive");
  }
};

// Regularizer weights of the four training regimes, per detector.
enum class Preset { kBaseline, kMseNorm, kSep, kAll };

struct RegularizerWeights {
  double mse = 0.0;
  double norm = 0.0;
  double sep = 0.0;
};

inline RegularizerWeights presetWeights(Preset preset, DetectorKind kind) {
  double mse = 0.0;
  switch (kind) {
    case DetectorKind::kMsp: mse = 10.0; break;
    case DetectorKind::kOdin: mse = 1e8; break;
    case DetectorKind::kEnergy: mse = 1.0; break;
    case DetectorKind::kMahalanobis: mse = 0.1; break;
  }
  switch (preset) {
    case Preset::kBaseline: return {};
    case Preset::kMseNorm: return {mse, 0.1, 0.0};
    case Preset::kSep: return {0.0, 0.0, 50.0};
    case Preset::kAll: return {mse, 0.1, 50.0};
  }
  return {};
}

struct PresetSelection {
  Preset preset = Preset::kBaseline;
  std::optional<DetectorKind> detector;
};

// "baseline", "mse-norm", "sep", "all", optionally prefixed by a detector
// name, as in "energy-all" or "mahal-mse-norm".
inline PresetSelection parsePreset(const std::string& name) {
  auto regime = [](const std::string& s) -> std::optional<Preset> {
    if (s == "baseline") return Preset::kBaseline;
    if (s == "mse-norm") return Preset::kMseNorm;
    if (s == "sep") return Preset::kSep;
    if (s == "all") return Preset::kAll;
    return std::nullopt;
  };
  if (auto p = regime(name)) return {*p, std::nullopt};
  const auto dash = name.find('-');
  if (dash != std::string::npos) {
    auto p = regime(name.substr(dash + 1));
    if (p) {
      try {
        return {*p, parseDetectorKind(name.substr(0, dash))};
      } catch (const ConfigError&) {
      }
    }
  }
  throw ConfigError("unknown preset '" + name + "'");
}

inline void applyPreset(LearnConfig& cfg, Preset preset, DetectorKind kind) {
  const RegularizerWeights w = presetWeights(preset, kind);
  cfg.lambdaMse = w.mse;
  cfg.lambdaNorm = w.norm;
  cfg.lambdaSep = w.sep;
}

// ---- regularizers -------------------------------------------------------

// Column i: sum of the K training patches with the largest <patch, c_i>.
// Ties are broken by patch order.
inline Mat nearestPatchSums(const Mat& c, const Mat& patch_rows, Index k) {
  if (patch_rows.rows() < k) throw ArgumentError("R_expl needs at least K training patches");
  if (patch_rows.cols() != c.rows()) throw ShapeError("R_expl: patch channels do not match concepts");
  Mat sums = Mat::Zero(c.rows(), c.cols());
  std::vector<Index> order(static_cast<std::size_t>(patch_rows.rows()));
  for (Index i = 0; i < c.cols(); ++i) {
    const Vec ip = patch_rows * c.col(i);
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
      return ip(a) > ip(b) || (ip(a) == ip(b) && a < b);
    });
    for (Index t = 0; t < k; ++t) sums.col(i) += patch_rows.row(order[static_cast<std::size_t>(t)]).transpose();
  }
  return sums;
}

// (1/(mK)) sum_i sum_{x in T_i} <x, c_i> - (1/(m(m-1))) sum_{i<j} <c_i, c_j>,
// with the neighbour sets folded into `neighbor_sums`.
inline ad::Var regExplVar(ad::Var c, const Mat& neighbor_sums, Index k) {
  ad::Tape& tape = *c.tape;
  const Index m = ad::val(c).cols();
  ad::Var coherency = ad::scale(ad::sum(ad::hadamard(tape.constant(neighbor_sums), c)),
                                1.0 / (static_cast<double>(m) * static_cast<double>(k)));
  if (m == 1) return coherency;
  // sum_{i<j} <c_i, c_j> = (||C 1||^2 - ||C||_F^2) / 2
  ad::Var row_sum = ad::matmul(c, tape.constant(Mat::Ones(m, 1)));
  ad::Var pairs = ad::scale(ad::sub(ad::sum(ad::square(row_sum)), ad::sum(ad::square(c))), 0.5);
  return ad::sub(coherency, ad::scale(pairs, 1.0 / (static_cast<double>(m) * static_cast<double>(m - 1))));
}

inline double regExpl(const ConceptMatrix& c, const FeatureTensor& id_train, Index k) {
  ad::Tape tape;
  return ad::val(regExplVar(tape.constant(c.matrix()), nearestPatchSums(c.matrix(), id_train.rows(), k), k))(0, 0);
}

// Mean over samples of ||phi - phi_hat||_F^2.
inline ad::Var regNormVar(ad::Var reconstructed_rows, const Mat& feature_rows, Index samples) {
  ad::Var diff = ad::sub(reconstructed_rows, reconstructed_rows.tape->constant(feature_rows));
  return ad::scale(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(samples));
}

inline double regNorm(const ConceptMatrix& c, const ReconstructionNet& g, const FeatureTensor& id_batch) {
  const Mat rows = id_batch.rows();
  ad::Tape tape;
  return ad::val(regNormVar(tape.constant(conceptWorldRows(g, c, rows)), rows, static_cast<Index>(id_batch.samples())))(0, 0);
}

// Mean squared score gap over the ID batch plus the same over the OOD batch.
// Canonical targets enter as constants.
inline ad::Var regMseVar(ad::Var id_scores, const Vec& id_targets, ad::Var ood_scores, const Vec& ood_targets) {
  if (id_targets.size() == 0 || ood_targets.size() == 0) {
    throw ArgumentError("J_mse needs both an ID and an OOD batch");
  }
  ad::Tape& tape = *id_scores.tape;
  ad::Var a = ad::mean(ad::square(ad::sub(id_scores, tape.constant(Mat(id_targets)))));
  ad::Var b = ad::mean(ad::square(ad::sub(ood_scores, tape.constant(Mat(ood_targets)))));
  return ad::add(a, b);
}

inline double regMse(const ConceptMatrix& c, const ReconstructionNet& g, const ClassifierHead& head,
                     const DetectorSpec& spec, const FeatureTensor& id_batch, const FeatureTensor& ood_batch) {
  if (id_batch.samples() == 0 || ood_batch.samples() == 0) throw ArgumentError("J_mse needs both an ID and an OOD batch");
  const Index patches = static_cast<Index>(id_batch.patches());
  const Mat id_rows = id_batch.rows();
  const Mat ood_rows = ood_batch.rows();
  ad::Tape tape;
  ad::Var si = tape.constant(Mat(scoreRows(spec, head, conceptWorldRows(g, c, id_rows), patches)));
  ad::Var so = tape.constant(Mat(scoreRows(spec, head, conceptWorldRows(g, c, ood_rows), patches)));
  return ad::val(regMseVar(si, scoreRows(spec, head, id_rows, patches), so, scoreRows(spec, head, ood_rows, patches)))(0, 0);
}

// J_sep between detected-ID and detected-OOD rows of `reduced`. Empty
// sides yield no term.
inline std::optional<ad::Var> regSepVar(ad::Var reduced, const std::vector<int>& detected_id,
                                        const std::vector<std::uint32_t>& predicted, std::uint32_t classes,
                                        SeparabilityMode mode, const Ridge& ridge) {
  auto split = [&](auto keep) {
    std::pair<std::vector<Index>, std::vector<Index>> sides;
    for (std::size_t i = 0; i < detected_id.size(); ++i) {
      if (!keep(i)) continue;
      (detected_id[i] ? sides.first : sides.second).push_back(static_cast<Index>(i));
    }
    return sides;
  };
  auto term = [&](const std::vector<Index>& in, const std::vector<Index>& out) -> std::optional<ad::Var> {
    if (in.empty() || out.empty()) return std::nullopt;
    try {
      return fisherSeparabilityVar(ad::selectRows(reduced, in), ad::selectRows(reduced, out), ridge);
    } catch (const NumericError&) {
      return std::nullopt;
    }
  };
  if (mode == SeparabilityMode::kGlobal) {
    auto [in, out] = split([](std::size_t) { return true; });
    return term(in, out);
  }
  std::optional<ad::Var> total;
  int count = 0;
  for (std::uint32_t y = 0; y < classes; ++y) {
    auto [in, out] = split([&](std::size_t i) { return predicted[i] == y; });
    auto j = term(in, out);
    if (!j) continue;
    total = total ? ad::add(*total, *j) : *j;
    ++count;
  }
  if (!total) return std::nullopt;
  return ad::scale(*total, 1.0 / count);
}

inline double regSep(const ConceptMatrix& c, const CalibratedDetector& cd, const ClassifierHead& head,
                     const FeatureTensor& id_pool, const FeatureTensor& ood_pool, double alpha = 1e-3,
                     SeparabilityMode mode = SeparabilityMode::kGlobal, const Ridge& ridge = {}) {
  const Index patches = static_cast<Index>(id_pool.patches());
  Mat rows(id_pool.rows().rows() + ood_pool.rows().rows(), id_pool.channels());
  rows << id_pool.rows(), ood_pool.rows();
  const WorldView view = viewOf(cd.spec, head, rows, patches);
  ad::Tape tape;
  ad::Var reduced = reduceSmoothVar(tape.constant(conceptScores(c, rows)), patches, alpha);
  auto j = regSepVar(reduced, decide(cd, view.scores), view.predicted, static_cast<std::uint32_t>(head.numClasses()), mode, ridge);
  return j ? ad::val(*j)(0, 0) : 0.0;
}

// ---- objective ----------------------------------------------------------

// One optimisation batch with its detached ingredients.
struct ObjectiveBatch {
  Mat idRows;
  std::vector<Index> idLabels;
  Vec idTargets;  // canonical scores
  Mat oodRows;
  Vec oodTargets;
  std::vector<int> detectedId;  // canonical decisions, ID rows then OOD rows
  std::vector<std::uint32_t> predicted;  // canonical predicted class, same order
};

struct LossTerms {
  double crossEntropy = 0.0;
  double rexpl = 0.0;
  double jmse = 0.0;
  double jnorm = 0.0;
  double jsep = 0.0;
  double total = 0.0;
  bool sepSkipped = false;
};

struct Objective {
  ad::Var total;
  LossTerms terms;
};

// CE - l_expl R_expl + l_mse J_mse + l_norm J_norm - l_sep J_sep, minimised.
// Terms with zero weight are not evaluated and report 0.
inline Objective buildObjective(ad::Var c, const NetVars& g, const ClassifierHead& head, const DetectorSpec& spec,
                                const LearnConfig& cfg, const ObjectiveBatch& batch, const Mat& neighbor_sums,
                                Index patches) {
  ad::Tape& tape = *c.tape;
  Objective obj;
  const Index n_id = batch.idRows.rows() / patches;
  ad::Var id_hat = reconstructVar(conceptScoresVar(tape.constant(batch.idRows), c), g);
  ad::Var logits = headLogits(id_hat, head, patches);
  ad::Var total = ad::mean(ad::sub(ad::rowLogSumExp(logits), ad::pickColumns(logits, batch.idLabels)));
  obj.terms.crossEntropy = ad::val(total)(0, 0);

  if (cfg.lambdaExpl > 0.0) {
    ad::Var r = regExplVar(c, neighbor_sums, cfg.neighbors);
    obj.terms.rexpl = ad::val(r)(0, 0);
    total = ad::sub(total, ad::scale(r, cfg.lambdaExpl));
  }
  if (cfg.lambdaMse > 0.0) {
    ad::Var ood_hat = reconstructVar(conceptScoresVar(tape.constant(batch.oodRows), c), g);
    ad::Var j = regMseVar(scoreVar(spec, head, id_hat, patches), batch.idTargets, scoreVar(spec, head, ood_hat, patches),
                          batch.oodTargets);
    obj.terms.jmse = ad::val(j)(0, 0);
    total = ad::add(total, ad::scale(j, cfg.lambdaMse));
  }
  if (cfg.lambdaNorm > 0.0) {
    ad::Var j = regNormVar(id_hat, batch.idRows, n_id);
    obj.terms.jnorm = ad::val(j)(0, 0);
    total = ad::add(total, ad::scale(j, cfg.lambdaNorm));
  }
  if (cfg.lambdaSep > 0.0) {
    Mat pooled_rows(batch.idRows.rows() + batch.oodRows.rows(), batch.idRows.cols());
    pooled_rows << batch.idRows, batch.oodRows;
    ad::Var reduced = reduceSmoothVar(conceptScoresVar(tape.constant(std::move(pooled_rows)), c), patches, cfg.alpha);
    auto j = regSepVar(reduced, batch.detectedId, batch.predicted, static_cast<std::uint32_t>(head.numClasses()),
                       cfg.separabilityMode, cfg.sepRidge);
    if (j) {
      obj.terms.jsep = ad::val(*j)(0, 0);
      total = ad::sub(total, ad::scale(*j, cfg.lambdaSep));
    } else {
      obj.terms.sepSkipped = true;
    }
  }
  obj.terms.total = ad::val(total)(0, 0);
  obj.total = total;
  return obj;
}

// ---- training loop ------------------------------------------------------

struct HistoryRow {
  int epoch = 0;
  double crossEntropy = 0.0;
  double rexpl = 0.0;
  double jmse = 0.0;
  double jnorm = 0.0;
  double jsep = 0.0;
  double etaDetVal = 0.0;
};

struct TrainState {
  ConceptMatrix concepts;
  ReconstructionNet g;
  Adam optimizer;
  int epoch = 0;
  std::vector<HistoryRow> history;
  int skippedSepBatches = 0;
};

struct TrainResult {
  TrainState state;
  CalibratedDetector detector;
};

using LogFn = std::function<void(const std::string&)>;

// Canonical-world quantities of the training pool, fixed for the whole run.
struct CanonicalPool {
  Mat idRows;
  Mat oodRows;
  Vec idScores;
  Vec oodScores;
  std::vector<int> idDetected;
  std::vector<int> oodDetected;
  std::vector<std::uint32_t> idPredicted;
  std::vector<std::uint32_t> oodPredicted;
};

inline CanonicalPool canonicalPool(const CalibratedDetector& cd, const ClassifierHead& head, const FeatureTensor& id,
                                   const FeatureTensor& ood) {
  const Index patches = static_cast<Index>(id.patches());
  CanonicalPool p;
  p.idRows = id.rows();
  p.oodRows = ood.rows();
  WorldView vi = viewOf(cd.spec, head, p.idRows, patches);
  WorldView vo = viewOf(cd.spec, head, p.oodRows, patches);
  p.idScores = vi.scores;
  p.oodScores = vo.scores;
  p.idDetected = decide(cd, vi.scores);
  p.oodDetected = decide(cd, vo.scores);
  p.idPredicted = std::move(vi.predicted);
  p.oodPredicted = std::move(vo.predicted);
  return p;
}

inline ObjectiveBatch makeBatch(const CanonicalPool& pool, const LabelVector& labels, Index patches,
                                std::span<const std::size_t> id_idx, std::span<const std::size_t> ood_idx) {
  ObjectiveBatch b;
  const Index d = pool.idRows.cols();
  b.idRows.resize(static_cast<Index>(id_idx.size()) * patches, d);
  b.idTargets.resize(static_cast<Index>(id_idx.size()));
  for (std::size_t i = 0; i < id_idx.size(); ++i) {
    const Index s = static_cast<Index>(id_idx[i]);
    b.idRows.middleRows(static_cast<Index>(i) * patches, patches) = pool.idRows.middleRows(s * patches, patches);
    b.idLabels.push_back(static_cast<Index>(labels[id_idx[i]]));
    b.idTargets(static_cast<Index>(i)) = pool.idScores(s);
    b.detectedId.push_back(pool.idDetected[id_idx[i]]);
    b.predicted.push_back(pool.idPredicted[id_idx[i]]);
  }
  b.oodRows.resize(static_cast<Index>(ood_idx.size()) * patches, d);
  b.oodTargets.resize(static_cast<Index>(ood_idx.size()));
  for (std::size_t i = 0; i < ood_idx.size(); ++i) {
    const Index s = static_cast<Index>(ood_idx[i]);
    b.oodRows.middleRows(static_cast<Index>(i) * patches, patches) = pool.oodRows.middleRows(s * patches, patches);
    b.oodTargets(static_cast<Index>(i)) = pool.oodScores(s);
    b.detectedId.push_back(pool.oodDetected[ood_idx[i]]);
    b.predicted.push_back(pool.oodPredicted[ood_idx[i]]);
  }
  return b;
}

// Detection completeness on validation data, NaN when the canonical
// detector is no better than chance there.
inline double validationEtaDet(const CalibratedDetector& cd, const ClassifierHead& head, const ReconstructionNet& g,
                               const ConceptMatrix& c, const FeatureTensor& id_val, const FeatureTensor& ood_val,
                               double canonical_auc) {
  if (!(canonical_auc > kRandomAuroc) || ood_val.samples() == 0) return std::nan("");
  const Index patches = static_cast<Index>(id_val.patches());
  const Vec a = scoreRows(cd.spec, head, conceptWorldRows(g, c, id_val.rows()), patches);
  const Vec b = scoreRows(cd.spec, head, conceptWorldRows(g, c, ood_val.rows()), patches);
  return completenessRatio(auroc(a, b), canonical_auc, kRandomAuroc);
}

// Learns C and g for a frozen head: calibrate gamma on validation data, then
// per epoch refresh the nearest-patch sets and take one Adam step per batch,
// renormalising the columns of C after every step.
inline TrainResult trainConcepts(const LearnConfig& cfg, const DatasetBundle& bundle, const ClassifierHead& head,
                                 const DetectorSpec& spec, const LogFn& log = {}) {
  cfg.validate();
  spec.validate();
  bundle.validate();
  if (bundle.oodTrain.samples() == 0) throw ArgumentError("concept learning needs OOD training data");
  const Index patches = static_cast<Index>(bundle.patches());
  const Index d = static_cast<Index>(bundle.channels());
  if (head.channels() != d) throw ShapeError("head channels do not match the features");

  const CalibratedDetector cd = calibrate(spec, head, bundle.idVal.features);
  const CanonicalPool pool = canonicalPool(cd, head, bundle.idTrain.features, bundle.oodTrain);
  double val_auc = std::nan("");
  if (bundle.oodVal.samples() > 0) {
    val_auc = auroc(score(cd.spec, head, bundle.idVal.features), score(cd.spec, head, bundle.oodVal));
  }

  std::mt19937_64 rng(cfg.seed);
  Mat c = randomConcepts(d, cfg.concepts, rng).matrix();
  ReconstructionNet g = ReconstructionNet::random(cfg.concepts, d, cfg.hidden, rng);
  TrainState st{ConceptMatrix(c), g, Adam(AdamOptions{cfg.learningRate}), 0, {}, 0};
  st.optimizer.addParameter(c);
  st.optimizer.addParameter(g.w1);
  st.optimizer.addParameter(g.b1);
  st.optimizer.addParameter(g.w2);
  st.optimizer.addParameter(g.b2);

  const std::size_t n_id = bundle.idTrain.features.samples();
  const std::size_t n_ood = bundle.oodTrain.samples();
  const std::size_t batches = (n_id + static_cast<std::size_t>(cfg.batchSize) - 1) / static_cast<std::size_t>(cfg.batchSize);
  std::vector<std::size_t> id_order(n_id);
  std::vector<std::size_t> ood_order(n_ood);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Mat neighbor_sums = cfg.lambdaExpl > 0.0 ? nearestPatchSums(c, pool.idRows, cfg.neighbors) : Mat();
    std::iota(id_order.begin(), id_order.end(), std::size_t{0});
    std::iota(ood_order.begin(), ood_order.end(), std::size_t{0});
    std::shuffle(id_order.begin(), id_order.end(), rng);
    std::shuffle(ood_order.begin(), ood_order.end(), rng);

    HistoryRow row;
    row.epoch = epoch;
    int skipped = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t i0 = b * static_cast<std::size_t>(cfg.batchSize);
      const std::size_t i1 = std::min(n_id, i0 + static_cast<std::size_t>(cfg.batchSize));
      const std::size_t o0 = b * n_ood / batches;
      const std::size_t o1 = (b + 1) * n_ood / batches;
      const ObjectiveBatch batch =
          makeBatch(pool, bundle.idTrain.labels, patches, std::span(id_order).subspan(i0, i1 - i0),
                    std::span(ood_order).subspan(o0, o1 - o0));

      ad::Tape tape;
      ad::Var cv = tape.parameter(c);
      NetVars gv = NetVars::bind(tape, g, true);
      const Objective obj = buildObjective(cv, gv, head, cd.spec, cfg, batch, neighbor_sums, patches);
      if (!std::isfinite(obj.terms.total)) throw TrainingError("concept learning loss is not finite", epoch);
      if (obj.terms.sepSkipped) ++skipped;
      tape.backward(obj.total);
      st.optimizer.update({&c, &g.w1, &g.b1, &g.w2, &g.b2},
                          {tape.grad(cv), tape.grad(gv.w1), tape.grad(gv.b1), tape.grad(gv.w2), tape.grad(gv.b2)});
      c = normalizeColumns(c).matrix();

      row.crossEntropy += obj.terms.crossEntropy;
      row.rexpl += obj.terms.rexpl;
      row.jmse += obj.terms.jmse;
      row.jnorm += obj.terms.jnorm;
      row.jsep += obj.terms.jsep;
    }
    const double nb = static_cast<double>(batches);
    row.crossEntropy /= nb;
    row.rexpl /= nb;
    row.jmse /= nb;
    row.jnorm /= nb;
    row.jsep /= nb;
    if (!c.allFinite() || !g.w1.allFinite() || !g.w2.allFinite() || !g.b1.allFinite() || !g.b2.allFinite()) {
      throw TrainingError("concept learning parameters are not finite", epoch);
    }
    st.concepts = ConceptMatrix(c);
    st.g = g;
    row.etaDetVal = validationEtaDet(cd, head, g, st.concepts, bundle.idVal.features, bundle.oodVal, val_auc);
    st.history.push_back(row);
    st.epoch = epoch + 1;
    st.skippedSepBatches += skipped;
    if (skipped > 0 && log) {
      log("epoch " + std::to_string(epoch) + ": separability term skipped on " + std::to_string(skipped) +
          " batch(es) with an empty detected-ID or detected-OOD side");
    }
  }
  st.concepts = ConceptMatrix(c);
  st.g = g;
  return {std::move(st), cd};
}

// Drops near-duplicate concepts. The W1 row of each dropped column is folded
// into its representative's row, signed by their inner product, so that g
// sees the same input it would have seen from the duplicate.
inline ConceptModel deduplicateModel(const ConceptModel& model, double threshold = 0.95) {
  const DedupResult r = deduplicate(model.concepts, threshold);
  ReconstructionNet g = model.g;
  g.w1 = Mat::Zero(static_cast<Index>(r.kept.size()), model.g.hidden());
  for (std::size_t j = 0; j < r.representative.size(); ++j) {
    g.w1.row(r.representative[j]) += r.sign[j] * model.g.w1.row(static_cast<Index>(j));
  }
  return {model.head, std::move(g), r.concepts};
}

inline std::string historyCsv(const std::vector<HistoryRow>& history) {
  std::ostringstream out;
  out << "epoch,crossEntropy,Rexpl,Jmse,Jnorm,Jsep,etaDetVal\n";
  for (const HistoryRow& r : history) {
    out << r.epoch << ',' << formatReal(r.crossEntropy) << ',' << formatReal(r.rexpl) << ',' << formatReal(r.jmse)
        << ',' << formatReal(r.jnorm) << ',' << formatReal(r.jsep) << ',' << formatReal(r.etaDetVal) << '\n';
  }
  return out.str();
}

inline void storeConcepts(Checkpoint& ck, const ConceptMatrix& c) { ck.putMatrix("concepts.C", c.matrix()); }

inline ConceptMatrix loadConcepts(const Checkpoint& ck) { return ConceptMatrix(ck.getMatrix("concepts.C")); }

}  // namespace oodx
