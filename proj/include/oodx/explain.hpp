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
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oodx/adam.hpp"
#include "oodx/autodiff.hpp"
#include "oodx/concepts.hpp"
#include "oodx/detectors.hpp"
#include "oodx/errors.hpp"
#include "oodx/format.hpp"
#include "oodx/learn.hpp"
#include "oodx/metrics.hpp"
#include "oodx/model.hpp"
#include "oodx/pipeline.hpp"

namespace oodx {

using ConceptSet = std::uint64_t;  // bit i set = concept i present

inline constexpr std::size_t kMaxExactConcepts = 15;

inline ConceptSet fullSet(std::size_t m) { return m >= 64 ? ~ConceptSet{0} : (ConceptSet{1} << m) - 1; }

struct ShapleyResult {
  std::vector<double> values;
  std::vector<double> standardErrors;  // empty in exact mode
  bool exact = true;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double full = 0.0;   // nu(all concepts)
  double empty = 0.0;  // nu(no concepts)
};

// Exact Shapley values of a set function nu over m players:
// phi_i = sum_{S not containing i} |S|! (m-|S|-1)! / m! (nu(S + i) - nu(S)).
template <typename Nu>
ShapleyResult shapleyExact(std::size_t m, Nu&& nu) {
  if (m == 0) throw ArgumentError("Shapley values need at least one concept");
  if (m > kMaxExactConcepts) {
    throw ArgumentError("exact Shapley supports at most " + std::to_string(kMaxExactConcepts) + " concepts, got " +
                        std::to_string(m) + "; use Monte Carlo mode instead");
  }
  const ConceptSet count = ConceptSet{1} << m;
  std::vector<double> value(count);
  for (ConceptSet s = 0; s < count; ++s) value[s] = nu(s);
  std::vector<double> fact(m + 1, 1.0);
  for (std::size_t k = 1; k <= m; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
  std::vector<double> weight(m);
  for (std::size_t k = 0; k < m; ++k) weight[k] = fact[k] * fact[m - k - 1] / fact[m];

  ShapleyResult r;
  r.values.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const ConceptSet bit = ConceptSet{1} << i;
    for (ConceptSet s = 0; s < count; ++s) {
      if (s & bit) continue;
      r.values[i] += weight[static_cast<std::size_t>(std::popcount(s))] * (value[s | bit] - value[s]);
    }
  }
  r.full = value[count - 1];
  r.empty = value[0];
  return r;
}

// Permutation-sampling estimate: the mean marginal gain of each concept over
// `samples` uniformly random orderings, with its standard error.
template <typename Nu>
ShapleyResult shapleyMonteCarlo(std::size_t m, Nu&& nu, std::size_t samples, std::uint64_t seed) {
  if (m == 0) throw ArgumentError("Shapley values need at least one concept");
  if (m > 64) throw ArgumentError("at most 64 concepts are supported");
  if (samples < 1) throw ArgumentError("Monte Carlo Shapley needs at least one permutation");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(m);
  std::vector<double> mean(m, 0.0);
  std::vector<double> m2(m, 0.0);
  for (std::size_t t = 0; t < samples; ++t) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    ConceptSet s = 0;
    double prev = nu(s);
    for (std::size_t i : order) {
      s |= ConceptSet{1} << i;
      const double cur = nu(s);
      const double gain = cur - prev;
      prev = cur;
      const double delta = gain - mean[i];
      mean[i] += delta / static_cast<double>(t + 1);
      m2[i] += delta * (gain - mean[i]);
    }
  }
  ShapleyResult r;
  r.exact = false;
  r.samples = samples;
  r.seed = seed;
  r.values = mean;
  r.standardErrors.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    r.standardErrors[i] = samples > 1 ? std::sqrt(m2[i] / static_cast<double>(samples - 1) / static_cast<double>(samples))
                                      : std::nan("");
  }
  r.full = nu(fullSet(m));
  r.empty = nu(ConceptSet{0});
  return r;
}

// ---- detection-completeness characteristic ------------------------------

struct CharacteristicConfig {
  int budget = 20;  // fine-tuning steps per subset
  double learningRate = 1e-3;
  double lambdaMse = 0.0;
  double lambdaNorm = 0.0;
  std::size_t subsample = 64;  // ID and OOD training samples used for fine-tuning
  std::uint64_t seed = 0;
};

// nu(S) = per-class detection completeness with concepts outside S masked to
// zero. For proper subsets, W1 and b1 of a copy of g are first fine-tuned for
// a fixed budget. nu(empty) = 0, and a class left without enough samples on
// either side scores 0. Values for all classes are cached per subset; each
// subset is computed at most once even under concurrent calls.
class DetectionCharacteristic {
 public:
  struct Values {
    std::vector<std::optional<double>> perClass;
    double global = 0.0;
  };

  DetectionCharacteristic(CalibratedDetector cd, ConceptModel model, LabeledSplit id_test, FeatureTensor ood_test,
                          LabeledSplit id_train, FeatureTensor ood_train, CharacteristicConfig cfg = {})
      : cd_(std::move(cd)), model_(std::move(model)), cfg_(cfg) {
    cd_.spec.validate();
    if (model_.concepts.size() > 64) throw ArgumentError("at most 64 concepts are supported");
    patches_ = static_cast<Index>(id_test.features.patches());
    classes_ = id_test.labels.numClasses();
    idRows_ = id_test.features.rows();
    oodRows_ = ood_test.rows();
    aucCanonical_ = auroc(scoreRows(cd_.spec, model_.head, idRows_, patches_),
                          scoreRows(cd_.spec, model_.head, oodRows_, patches_));
    if (!(aucCanonical_ > kRandomAuroc)) {
      throw NumericError("canonical detector AUROC is not above 0.5; detection completeness undefined");
    }

    std::mt19937_64 rng(cfg_.seed);
    auto pick = [&](std::size_t n) {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(std::min(n, cfg_.subsample));
      std::sort(idx.begin(), idx.end());
      return idx;
    };
    const auto id_idx = pick(id_train.features.samples());
    const auto ood_idx = pick(ood_train.samples());
    tuneId_ = id_train.features.select(id_idx).rows();
    for (std::size_t i : id_idx) tuneLabels_.push_back(static_cast<Index>(id_train.labels[i]));
    tuneIdTargets_ = scoreRows(cd_.spec, model_.head, tuneId_, patches_);
    if (!ood_idx.empty()) {
      tuneOod_ = ood_train.select(ood_idx).rows();
      tuneOodTargets_ = scoreRows(cd_.spec, model_.head, tuneOod_, patches_);
    }
  }

  std::size_t concepts() const { return static_cast<std::size_t>(model_.concepts.size()); }
  std::uint32_t classes() const { return classes_; }
  double canonicalAuroc() const { return aucCanonical_; }

  const Values& values(ConceptSet s) {
    std::shared_ptr<Entry> entry;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto& slot = cache_[s];
      if (!slot) slot = std::make_shared<Entry>();
      entry = slot;
    }
    std::call_once(entry->once, [&] { entry->values = compute(s); });
    return entry->values;
  }

  // nu for one class; std::nullopt selects global detection completeness.
  double operator()(ConceptSet s, std::optional<std::uint32_t> cls) {
    const Values& v = values(s);
    if (!cls) return v.global;
    if (*cls >= classes_) throw ArgumentError("class index out of range");
    return v.perClass[*cls].value_or(0.0);
  }

  std::size_t cacheSize() const {
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.size();
  }

  // Cached subsets with their value for one class, ordered by subset key.
  std::vector<std::pair<ConceptSet, double>> cached(std::optional<std::uint32_t> cls) {
    std::vector<ConceptSet> keys;
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (const auto& [k, e] : cache_) keys.push_back(k);
    }
    std::vector<std::pair<ConceptSet, double>> out;
    for (ConceptSet k : keys) out.emplace_back(k, (*this)(k, cls));
    return out;
  }

 private:
  struct Entry {
    std::once_flag once;
    Values values;
  };

  Mat maskedConcepts(ConceptSet s) const {
    Mat c = model_.concepts.matrix();
    for (Index j = 0; j < c.cols(); ++j) {
      if (!(s & (ConceptSet{1} << j))) c.col(j).setZero();
    }
    return c;
  }

  ReconstructionNet finetune(const Mat& c) const {
    ReconstructionNet g = model_.g;
    Adam adam(AdamOptions{cfg_.learningRate});
    adam.addParameter(g.w1);
    adam.addParameter(g.b1);
    const Mat id_scores = tuneId_ * c;
    const Mat ood_scores = tuneOod_.rows() > 0 ? Mat(tuneOod_ * c) : Mat();
    for (int step = 0; step < cfg_.budget; ++step) {
      ad::Tape tape;
      NetVars gv{tape.parameter(g.w1), tape.parameter(g.b1), tape.constant(g.w2), tape.constant(g.b2)};
      ad::Var id_hat = reconstructVar(tape.constant(id_scores), gv);
      ad::Var logits = headLogits(id_hat, model_.head, patches_);
      ad::Var loss = ad::mean(ad::sub(ad::rowLogSumExp(logits), ad::pickColumns(logits, tuneLabels_)));
      if (cfg_.lambdaMse > 0.0 && ood_scores.rows() > 0) {
        ad::Var ood_hat = reconstructVar(tape.constant(ood_scores), gv);
        ad::Var j = regMseVar(scoreVar(cd_.spec, model_.head, id_hat, patches_), tuneIdTargets_,
                              scoreVar(cd_.spec, model_.head, ood_hat, patches_), tuneOodTargets_);
        loss = ad::add(loss, ad::scale(j, cfg_.lambdaMse));
      }
      if (cfg_.lambdaNorm > 0.0) {
        ad::Var j = regNormVar(id_hat, tuneId_, static_cast<Index>(tuneLabels_.size()));
        loss = ad::add(loss, ad::scale(j, cfg_.lambdaNorm));
      }
      if (!std::isfinite(ad::val(loss)(0, 0))) throw NumericError("characteristic fine-tuning diverged");
      tape.backward(loss);
      adam.update({&g.w1, &g.b1}, {tape.grad(gv.w1), tape.grad(gv.b1)});
    }
    return g;
  }

  Values compute(ConceptSet s) const {
    Values v;
    v.perClass.assign(classes_, 0.0);
    if (s == 0) return v;
    const bool full = (s & fullSet(concepts())) == fullSet(concepts());
    const Mat c = maskedConcepts(s);
    const ReconstructionNet g = full ? model_.g : finetune(c);
    const WorldView vi = viewOf(cd_.spec, model_.head, reconstruct(g, idRows_ * c), patches_);
    const WorldView vo = viewOf(cd_.spec, model_.head, reconstruct(g, oodRows_ * c), patches_);
    v.global = completenessRatio(auroc(vi.scores, vo.scores), aucCanonical_, kRandomAuroc);
    v.perClass = perClassDetectionCompleteness(vi, vo, aucCanonical_, classes_);
    return v;
  }

  CalibratedDetector cd_;
  ConceptModel model_;
  CharacteristicConfig cfg_;
  Index patches_ = 1;
  std::uint32_t classes_ = 2;
  Mat idRows_;
  Mat oodRows_;
  double aucCanonical_ = 0.0;
  Mat tuneId_;
  std::vector<Index> tuneLabels_;
  Vec tuneIdTargets_;
  Mat tuneOod_;
  Vec tuneOodTargets_;
  mutable std::mutex mu_;
  std::map<ConceptSet, std::shared_ptr<Entry>> cache_;
};

// Concept indices by decreasing Shapley value; ties keep index order.
inline std::vector<Index> rankConcepts(const std::vector<double>& shap) {
  std::vector<Index> order(shap.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return shap[static_cast<std::size_t>(a)] > shap[static_cast<std::size_t>(b)];
  });
  return order;
}

// ---- profiles -----------------------------------------------------------

// Per-class mean reduced score vectors, undefined for classes with no member.
inline std::vector<std::optional<RowVec>> classMeans(const Mat& reduced, std::span<const std::uint32_t> predicted,
                                                     std::span<const int> include, std::uint32_t classes) {
  std::vector<RowVec> sums(classes, RowVec::Zero(reduced.cols()));
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!include[i]) continue;
    sums[predicted[i]] += reduced.row(static_cast<Index>(i));
    ++counts[predicted[i]];
  }
  std::vector<std::optional<RowVec>> out(classes);
  for (std::uint32_t y = 0; y < classes; ++y) {
    if (counts[y] > 0) out[y] = sums[y] / static_cast<double>(counts[y]);
  }
  return out;
}

// Per class: mean exact reduced scores of held-out ID inputs detected as ID
// and of held-out OOD inputs detected as OOD, grouped by the concept-world
// prediction and decision.
struct ConceptProfile {
  std::vector<std::optional<RowVec>> id;
  std::vector<std::optional<RowVec>> ood;
};

inline ConceptProfile buildProfiles(const CalibratedDetector& cd, const ClassifierHead& head, const ReconstructionNet& g,
                                    const ConceptMatrix& c, const FeatureTensor& held_out_id,
                                    const FeatureTensor& held_out_ood) {
  const Index patches = static_cast<Index>(held_out_id.patches());
  const std::uint32_t classes = static_cast<std::uint32_t>(head.numClasses());
  auto side = [&](const FeatureTensor& t, int wanted) {
    const Mat rows = t.rows();
    const Mat scores = conceptScores(c, rows);
    const WorldView v = viewOf(cd.spec, head, reconstruct(g, scores), patches);
    std::vector<int> include = decide(cd, v.scores);
    for (int& x : include) x = (x == wanted);
    return classMeans(reduceMax(scores, patches, ReduceMode::kExact).values, v.predicted, include, classes);
  };
  return {side(held_out_id, 1), side(held_out_ood, 0)};
}

// ---- interventions ------------------------------------------------------

enum class InterventionDirection {
  kIdDetectedAsOod,  // edited with ID profiles
  kOodDetectedAsId,  // edited with OOD profiles
};

struct InterventionResult {
  std::vector<std::size_t> samples;  // indices of intervened inputs
  ReducedScores before;
  ReducedScores after;
  Vec scoresBefore;
  Vec scoresAfter;
  std::size_t flips = 0;
};

// How a profile value is written into the per-patch scores of one concept.
// Both set the reduced score of the concept to the profile value.
enum class InterventionEdit {
  kRescale,    // scale all patches so the largest |score| equals the value
  kBroadcast,  // the same value on every patch
};

inline InterventionEdit parseInterventionEdit(const std::string& s) {
  if (s == "rescale") return InterventionEdit::kRescale;
  if (s == "broadcast") return InterventionEdit::kBroadcast;
  throw ConfigError("unknown intervention edit '" + s + "' (expected rescale or broadcast)");
}

inline std::string toString(InterventionEdit e) { return e == InterventionEdit::kRescale ? "rescale" : "broadcast"; }

// Replaces, for each concept-world misdetected input of predicted class j,
// the per-patch scores of the top-K concepts of class j's ranking with the
// matching profile value, then reconstructs and rescores. Correctly detected
// inputs and inputs whose class has no profile are left out.
inline InterventionResult intervene(const CalibratedDetector& cd, const ClassifierHead& head,
                                    const ReconstructionNet& g, const ConceptMatrix& c, const FeatureTensor& inputs,
                                    InterventionDirection direction, std::size_t top_k, const ConceptProfile& profiles,
                                    const std::vector<std::vector<Index>>& ranking,
                                    InterventionEdit edit = InterventionEdit::kRescale) {
  const std::size_t m = static_cast<std::size_t>(c.size());
  if (top_k > m) throw ArgumentError("top-K exceeds the number of concepts");
  const Index patches = static_cast<Index>(inputs.patches());
  const bool id_side = direction == InterventionDirection::kIdDetectedAsOod;
  const auto& profile = id_side ? profiles.id : profiles.ood;
  const int wrong = id_side ? 0 : 1;

  const Mat scores = conceptScores(c, inputs.rows());
  const WorldView v = viewOf(cd.spec, head, reconstruct(g, scores), patches);
  const std::vector<int> decision = decide(cd, v.scores);

  InterventionResult r;
  for (std::size_t i = 0; i < decision.size(); ++i) {
    if (decision[i] == wrong && profile.at(v.predicted[i])) r.samples.push_back(i);
  }
  const Index n = static_cast<Index>(r.samples.size());
  Mat edited(n * patches, c.size());
  for (Index s = 0; s < n; ++s) {
    const std::size_t i = r.samples[static_cast<std::size_t>(s)];
    edited.middleRows(s * patches, patches) = scores.middleRows(static_cast<Index>(i) * patches, patches);
    const std::uint32_t y = v.predicted[i];
    const RowVec& p = *profile[y];
    for (std::size_t t = 0; t < top_k; ++t) {
      const Index k = ranking.at(y).at(t);
      auto column = edited.block(s * patches, k, patches, 1);
      const double mx = column.cwiseAbs().maxCoeff();
      if (edit == InterventionEdit::kRescale && mx > 0.0) {
        column *= p(k) / mx;
      } else {
        column.setConstant(p(k));
      }
    }
  }
  Mat original(n * patches, c.size());
  for (Index s = 0; s < n; ++s) {
    original.middleRows(s * patches, patches) =
        scores.middleRows(static_cast<Index>(r.samples[static_cast<std::size_t>(s)]) * patches, patches);
  }
  r.before = reduceMax(original, patches, ReduceMode::kExact);
  r.after = reduceMax(edited, patches, ReduceMode::kExact);
  r.scoresBefore.resize(n);
  for (Index s = 0; s < n; ++s) r.scoresBefore(s) = v.scores(static_cast<Index>(r.samples[static_cast<std::size_t>(s)]));
  r.scoresAfter = n > 0 ? scoreRows(cd.spec, head, reconstruct(g, edited), patches) : Vec();
  const std::vector<int> after = decide(cd, r.scoresAfter);
  for (int x : after) r.flips += static_cast<std::size_t>(x != wrong);
  return r;
}

struct InterventionRow {
  std::size_t k = 0;
  std::size_t flips = 0;
  double aurocBefore = 0.0;
  double aurocAfter = 0.0;
};

// Concept-world AUROC on held-out data before and after intervening on every
// misdetected input, for each requested K.
inline std::vector<InterventionRow> interventionCurve(const CalibratedDetector& cd, const ClassifierHead& head,
                                                      const ReconstructionNet& g, const ConceptMatrix& c,
                                                      const FeatureTensor& id_test, const FeatureTensor& ood_test,
                                                      const ConceptProfile& profiles,
                                                      const std::vector<std::vector<Index>>& ranking,
                                                      std::vector<std::size_t> ks,
                                                      InterventionEdit edit = InterventionEdit::kRescale) {
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  const Index patches = static_cast<Index>(id_test.patches());
  const Vec id_scores = scoreRows(cd.spec, head, conceptWorldRows(g, c, id_test.rows()), patches);
  const Vec ood_scores = scoreRows(cd.spec, head, conceptWorldRows(g, c, ood_test.rows()), patches);
  const double before = auroc(id_scores, ood_scores);
  std::vector<InterventionRow> rows;
  for (std::size_t k : ks) {
    InterventionRow row{k, 0, before, before};
    Vec id_after = id_scores;
    Vec ood_after = ood_scores;
    const InterventionResult a = intervene(cd, head, g, c, id_test, InterventionDirection::kIdDetectedAsOod, k, profiles, ranking, edit);
    const InterventionResult b = intervene(cd, head, g, c, ood_test, InterventionDirection::kOodDetectedAsId, k, profiles, ranking, edit);
    for (std::size_t s = 0; s < a.samples.size(); ++s) id_after(static_cast<Index>(a.samples[s])) = a.scoresAfter(static_cast<Index>(s));
    for (std::size_t s = 0; s < b.samples.size(); ++s) ood_after(static_cast<Index>(b.samples[s])) = b.scoresAfter(static_cast<Index>(s));
    row.flips = a.flips + b.flips;
    row.aurocAfter = auroc(id_after, ood_after);
    rows.push_back(row);
  }
  return rows;
}

inline std::string interventionCsv(const std::vector<InterventionRow>& rows) {
  std::ostringstream out;
  out << "K,flips,aurocBefore,aurocAfter\n";
  for (const auto& r : rows) {
    out << r.k << ',' << r.flips << ',' << formatReal(r.aurocBefore) << ',' << formatReal(r.aurocAfter) << '\n';
  }
  return out.str();
}

// ---- reports ------------------------------------------------------------

struct PatternSummary {
  std::uint32_t classId = 0;
  std::vector<Index> topConceptIds;
  std::vector<double> shap;
  std::vector<double> meanReducedDetectedId;   // NaN when the profile is undefined
  std::vector<double> meanReducedDetectedOod;
};

inline PatternSummary patternSummary(std::uint32_t cls, const std::vector<double>& shap, const ConceptProfile& profiles,
                                     std::size_t top) {
  PatternSummary p;
  p.classId = cls;
  const std::vector<Index> order = rankConcepts(shap);
  for (std::size_t t = 0; t < std::min(top, order.size()); ++t) {
    const Index k = order[t];
    p.topConceptIds.push_back(k);
    p.shap.push_back(shap[static_cast<std::size_t>(k)]);
    p.meanReducedDetectedId.push_back(profiles.id.at(cls) ? (*profiles.id[cls])(k) : std::nan(""));
    p.meanReducedDetectedOod.push_back(profiles.ood.at(cls) ? (*profiles.ood[cls])(k) : std::nan(""));
  }
  return p;
}

inline std::string patternCsv(const std::vector<PatternSummary>& summaries) {
  std::ostringstream out;
  out << "class,conceptId,shap,meanIdScore,meanOodScore\n";
  for (const auto& s : summaries) {
    for (std::size_t t = 0; t < s.topConceptIds.size(); ++t) {
      out << s.classId << ',' << s.topConceptIds[t] << ',' << formatReal(s.shap[t]) << ','
          << formatReal(s.meanReducedDetectedId[t]) << ',' << formatReal(s.meanReducedDetectedOod[t]) << '\n';
    }
  }
  return out.str();
}

struct PatchMatch {
  Index conceptId = 0;
  std::size_t sampleIndex = 0;
  std::size_t patchIndex = 0;
  double innerProduct = 0.0;
};

// Patches whose inner product with a concept exceeds the threshold, by
// concept, then sample, then patch.
inline std::vector<PatchMatch> nearestPatches(const ConceptMatrix& c, const FeatureTensor& z, double threshold = 0.8) {
  const Mat scores = conceptScores(c, z.rows());
  const std::size_t patches = z.patches();
  std::vector<PatchMatch> out;
  for (Index k = 0; k < scores.cols(); ++k) {
    for (Index r = 0; r < scores.rows(); ++r) {
      if (scores(r, k) > threshold) {
        out.push_back({k, static_cast<std::size_t>(r) / patches, static_cast<std::size_t>(r) % patches, scores(r, k)});
      }
    }
  }
  return out;
}

inline std::string nearestPatchCsv(const std::vector<PatchMatch>& matches) {
  std::ostringstream out;
  out << "conceptId,sampleIndex,patchIndex,innerProduct\n";
  for (const auto& m : matches) {
    out << m.conceptId << ',' << m.sampleIndex << ',' << m.patchIndex << ',' << formatReal(m.innerProduct) << '\n';
  }
  return out.str();
}

}  // namespace oodx
