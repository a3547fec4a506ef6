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
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "oodx/autodiff.hpp"
#include "oodx/concepts.hpp"
#include "oodx/detectors.hpp"
#include "oodx/errors.hpp"
#include "oodx/pipeline.hpp"

namespace oodx {

// Accuracy of a uniform random predictor over L classes, and AUROC of a
// random detector.
inline double randomAccuracy(std::uint32_t classes) { return 1.0 / static_cast<double>(classes); }
inline constexpr double kRandomAuroc = 0.5;

// Fraction of (ID, OOD) pairs ranked correctly, ties counting one half.
// Sort-based, O((n + m) log(n + m)); the count is kept as an integer 2U so the
// result is bit-identical to explicit pair counting.
inline double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) throw ArgumentError("auroc needs non-empty ID and OOD score sets");
  std::vector<std::pair<double, bool>> all;
  all.reserve(id_scores.size() + ood_scores.size());
  for (double s : id_scores) all.emplace_back(s, true);
  for (double s : ood_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::uint64_t twice_u = 0;
  std::uint64_t ood_below = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::uint64_t ids = 0;
    std::uint64_t oods = 0;
    while (j < all.size() && all[j].first == all[i].first) {
      (all[j].second ? ids : oods) += 1;
      ++j;
    }
    twice_u += ids * (2 * ood_below + oods);
    ood_below += oods;
    i = j;
  }
  const double pairs = static_cast<double>(id_scores.size()) * static_cast<double>(ood_scores.size());
  return static_cast<double>(twice_u) / (2.0 * pairs);
}

inline double auroc(const Vec& id_scores, const Vec& ood_scores) {
  return auroc(std::span<const double>(id_scores.data(), static_cast<std::size_t>(id_scores.size())),
               std::span<const double>(ood_scores.data(), static_cast<std::size_t>(ood_scores.size())));
}

struct CompletenessResult {
  double etaClf = 0.0;
  double etaDet = 0.0;
  std::vector<std::optional<double>> perClassDet;
  double accConcept = 0.0;
  double accCanonical = 0.0;
  double aucConcept = 0.0;
  double aucCanonical = 0.0;
};

inline double completenessRatio(double concept_world, double canonical_value, double random_value) {
  return (concept_world - random_value) / (canonical_value - random_value);
}

inline double classificationCompleteness(double acc_concept, double acc_canonical, std::uint32_t classes) {
  const double ar = randomAccuracy(classes);
  if (!(acc_canonical > ar)) throw NumericError("canonical classifier is no better than chance; completeness undefined");
  return completenessRatio(acc_concept, acc_canonical, ar);
}

inline double classificationCompleteness(const ClassifierHead& head, const ReconstructionNet& g, const ConceptMatrix& c,
                                         const LabeledSplit& id_test) {
  const Index patches = static_cast<Index>(id_test.features.patches());
  const Mat rows = id_test.features.rows();
  const double canonical = accuracy(argmaxRows(headLogitsFromRows(head, rows, patches)), id_test.labels);
  const double in_concepts = accuracy(argmaxRows(headLogitsFromRows(head, conceptWorldRows(g, c, rows), patches)), id_test.labels);
  return classificationCompleteness(in_concepts, canonical, id_test.labels.numClasses());
}

namespace detail {

inline Vec gather(const Vec& v, const std::vector<std::uint32_t>& predicted, std::uint32_t cls) {
  std::vector<double> out;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == cls) out.push_back(v(static_cast<Index>(i)));
  }
  return Eigen::Map<Vec>(out.data(), static_cast<Index>(out.size()));
}

}  // namespace detail

// Per-class numerators: concept-world AUROC restricted to samples the
// concept-world classifier assigns to class j. Fewer than two samples on a
// side leaves the entry undefined.
inline std::vector<std::optional<double>> perClassDetectionCompleteness(
    const WorldView& concept_id, const WorldView& concept_ood, double auc_canonical, std::uint32_t classes) {
  std::vector<std::optional<double>> out(classes);
  for (std::uint32_t j = 0; j < classes; ++j) {
    const Vec a = detail::gather(concept_id.scores, concept_id.predicted, j);
    const Vec b = detail::gather(concept_ood.scores, concept_ood.predicted, j);
    if (a.size() < 2 || b.size() < 2) continue;
    out[j] = completenessRatio(auroc(a, b), auc_canonical, kRandomAuroc);
  }
  return out;
}

// Both completeness scores on held-out ID/OOD data in one pass.
inline CompletenessResult evaluateCompleteness(const CalibratedDetector& cd, const ClassifierHead& head,
                                               const ReconstructionNet& g, const ConceptMatrix& c,
                                               const LabeledSplit& id_test, const FeatureTensor& ood_test) {
  const Index patches = static_cast<Index>(id_test.features.patches());
  const Mat id_rows = id_test.features.rows();
  const Mat ood_rows = ood_test.rows();
  const WorldView can_id = viewOf(cd.spec, head, id_rows, patches);
  const WorldView can_ood = viewOf(cd.spec, head, ood_rows, patches);
  const WorldView con_id = viewOf(cd.spec, head, conceptWorldRows(g, c, id_rows), patches);
  const WorldView con_ood = viewOf(cd.spec, head, conceptWorldRows(g, c, ood_rows), patches);

  CompletenessResult r;
  r.accCanonical = accuracy(can_id.predicted, id_test.labels);
  r.accConcept = accuracy(con_id.predicted, id_test.labels);
  r.etaClf = classificationCompleteness(r.accConcept, r.accCanonical, id_test.labels.numClasses());
  r.aucCanonical = auroc(can_id.scores, can_ood.scores);
  r.aucConcept = auroc(con_id.scores, con_ood.scores);
  if (!(r.aucCanonical > kRandomAuroc)) {
    throw NumericError("canonical detector AUROC is not above 0.5; detection completeness undefined");
  }
  r.etaDet = completenessRatio(r.aucConcept, r.aucCanonical, kRandomAuroc);
  r.perClassDet = perClassDetectionCompleteness(con_id, con_ood, r.aucCanonical, id_test.labels.numClasses());
  return r;
}

inline double detectionCompleteness(const CalibratedDetector& cd, const ClassifierHead& head, const ReconstructionNet& g,
                                    const ConceptMatrix& c, const LabeledSplit& id_test, const FeatureTensor& ood_test) {
  return evaluateCompleteness(cd, head, g, c, id_test, ood_test).etaDet;
}

// Ridge added to the within-class scatter: a fixed value, or a multiple of
// trace(Sw)/m (the default, 1e-6).
struct Ridge {
  double amount = 1e-6;
  bool relativeToTrace = true;

  static Ridge absolute(double v) { return {v, false}; }
  static Ridge relative(double k) { return {k, true}; }

  double resolve(const Mat& sw) const {
    return relativeToTrace ? amount * sw.trace() / static_cast<double>(sw.rows()) : amount;
  }
};

struct SeparabilityResult {
  double global = 0.0;
  std::vector<std::optional<double>> perClass;
  Mat sw;
  Mat sb;
};

namespace detail {

struct FisherState {
  double j = 0.0;
  Mat sw;  // ridge included
  Mat sb;
  RowVec muIn;
  RowVec muOut;
  RowVec w;  // Sw^-1 (mu_out - mu_in)
  double ridge = 0.0;
};

inline Mat scatter(const Mat& v, const RowVec& mu) {
  const Mat centered = v.rowwise() - mu;
  return centered.transpose() * centered;
}

inline FisherState fisher(const Mat& vin, const Mat& vout, const Ridge& ridge) {
  if (vin.rows() == 0 || vout.rows() == 0) throw ArgumentError("separability needs non-empty ID and OOD sets");
  if (vin.cols() != vout.cols()) throw ShapeError("separability: dimension mismatch");
  FisherState s;
  s.muIn = vin.colwise().mean();
  s.muOut = vout.colwise().mean();
  s.sw = scatter(vin, s.muIn) + scatter(vout, s.muOut);
  s.ridge = ridge.resolve(s.sw);
  if (s.ridge < 0.0) throw ArgumentError("ridge must be non-negative");
  s.sw.diagonal().array() += s.ridge;
  const RowVec delta = s.muOut - s.muIn;
  s.sb = delta.transpose() * delta;
  Eigen::LDLT<Mat> ldlt(s.sw);
  const auto d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-13 * std::max(dmax, 1e-300))) {
    throw NumericError("within-class scatter matrix is singular");
  }
  s.w = ldlt.solve(delta.transpose()).transpose();
  s.j = delta.dot(s.w);
  return s;
}

}  // namespace detail

// J = (mu_out - mu_in)^T Sw^-1 (mu_out - mu_in) = tr(Sw^-1 Sb).
inline SeparabilityResult scatterSeparability(const Mat& vin, const Mat& vout, const Ridge& ridge = {}) {
  detail::FisherState s = detail::fisher(vin, vout, ridge);
  return {s.j, {}, std::move(s.sw), std::move(s.sb)};
}

inline SeparabilityResult scatterSeparability(const ReducedScores& vin, const ReducedScores& vout, const Ridge& ridge = {}) {
  return scatterSeparability(vin.values, vout.values, ridge);
}

// Differentiable J on the tape. With a trace-relative ridge the ridge itself
// depends on the inputs and is differentiated too.
inline ad::Var fisherSeparabilityVar(ad::Var vin, ad::Var vout, const Ridge& ridge) {
  detail::FisherState s = detail::fisher(ad::val(vin), ad::val(vout), ridge);
  const double n_in = static_cast<double>(ad::val(vin).rows());
  const double n_out = static_cast<double>(ad::val(vout).rows());
  const double m = static_cast<double>(ad::val(vin).cols());
  const double ridge_slope = ridge.relativeToTrace ? ridge.amount / m : 0.0;
  const double ww = s.w.squaredNorm();
  return vin.tape->record(
      Mat::Constant(1, 1, s.j), {vin, vout},
      [vin, vout, s = std::move(s), n_in, n_out, ridge_slope, ww](ad::Tape& t, const Mat& g) {
        const double up = g(0, 0);
        auto side = [&](ad::Var v, const RowVec& mu, double mean_sign, double count) {
          if (!t.needsGrad(v)) return;
          const Mat centered = t.value(v).rowwise() - mu;
          const Vec proj = centered * s.w.transpose();
          Mat gv = -2.0 * proj * s.w;  // scatter term
          gv.rowwise() += (2.0 * mean_sign / count) * s.w;
          gv -= (2.0 * ridge_slope * ww) * centered;
          t.accumulate(v, up * gv);
        };
        side(vin, s.muIn, -1.0, n_in);
        side(vout, s.muOut, 1.0, n_out);
      });
}

inline Mat selectRows(const Mat& m, const std::vector<Index>& rows) {
  Mat out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

// Global and per-class separability of reduced scores grouped by detector
// decision (1 = detected ID) and predicted class.
inline SeparabilityResult separability(const Mat& reduced, std::span<const int> detected_id,
                                       std::span<const std::uint32_t> predicted, std::uint32_t classes,
                                       const Ridge& ridge = {}) {
  if (static_cast<std::size_t>(reduced.rows()) != detected_id.size() || detected_id.size() != predicted.size()) {
    throw ShapeError("separability: group vectors do not match the score rows");
  }
  std::vector<Index> in_rows;
  std::vector<Index> out_rows;
  for (std::size_t i = 0; i < detected_id.size(); ++i) (detected_id[i] ? in_rows : out_rows).push_back(static_cast<Index>(i));
  SeparabilityResult r = scatterSeparability(selectRows(reduced, in_rows), selectRows(reduced, out_rows), ridge);
  r.perClass.resize(classes);
  for (std::uint32_t y = 0; y < classes; ++y) {
    std::vector<Index> yin;
    std::vector<Index> yout;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      if (predicted[i] != y) continue;
      (detected_id[i] ? yin : yout).push_back(static_cast<Index>(i));
    }
    if (yin.empty() || yout.empty()) continue;
    try {
      r.perClass[y] = detail::fisher(selectRows(reduced, yin), selectRows(reduced, yout), ridge).j;
    } catch (const NumericError&) {
      // degenerate class, left undefined
    }
  }
  return r;
}

// Median over classes of (J_y(C) - J_y(C')) / J_y(C'), skipping classes
// undefined on either side or with J_y(C') <= 0.
inline double relativeSeparability(const std::vector<std::optional<double>>& per_class,
                                   const std::vector<std::optional<double>>& per_class_baseline) {
  if (per_class.size() != per_class_baseline.size()) throw ArgumentError("relative separability: length mismatch");
  std::vector<double> ratios;
  for (std::size_t i = 0; i < per_class.size(); ++i) {
    if (!per_class[i] || !per_class_baseline[i] || !(*per_class_baseline[i] > 0.0)) continue;
    ratios.push_back((*per_class[i] - *per_class_baseline[i]) / *per_class_baseline[i]);
  }
  if (ratios.empty()) throw ArgumentError("relative separability: no class is defined on both sides");
  std::sort(ratios.begin(), ratios.end());
  const std::size_t n = ratios.size();
  return n % 2 == 1 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
}

inline double relativeSeparability(const std::vector<double>& per_class, const std::vector<double>& per_class_baseline) {
  std::vector<std::optional<double>> a(per_class.begin(), per_class.end());
  std::vector<std::optional<double>> b(per_class_baseline.begin(), per_class_baseline.end());
  return relativeSeparability(a, b);
}

}  // namespace oodx
