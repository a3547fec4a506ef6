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
#include <optional>
#include <string>
#include <vector>

#include "oodx/autodiff.hpp"
#include "oodx/errors.hpp"
#include "oodx/model.hpp"
#include "oodx/tensor.hpp"

namespace oodx {

enum class DetectorKind { kMsp, kOdin, kEnergy, kMahalanobis };

inline std::string toString(DetectorKind k) {
  switch (k) {
    case DetectorKind::kMsp: return "msp";
    case DetectorKind::kOdin: return "odin";
    case DetectorKind::kEnergy: return "energy";
    case DetectorKind::kMahalanobis: return "mahal";
  }
  return "unknown";
}

inline DetectorKind parseDetectorKind(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "msp") return DetectorKind::kMsp;
  if (s == "odin") return DetectorKind::kOdin;
  if (s == "energy") return DetectorKind::kEnergy;
  if (s == "mahal" || s == "mahalanobis") return DetectorKind::kMahalanobis;
  throw ConfigError("unknown detector kind '" + s + "'");
}

struct MahalanobisStats {
  Mat means;      // L x d class means of pooled features
  Mat precision;  // d x d inverse of the shared covariance (ridge included)
  double ridge = 0.0;
};

struct DetectorSpec {
  DetectorKind kind = DetectorKind::kEnergy;
  double temperature = 1.0;
  std::optional<MahalanobisStats> mahalanobis;

  static DetectorSpec withDefaults(DetectorKind kind) {
    DetectorSpec s;
    s.kind = kind;
    s.temperature = kind == DetectorKind::kOdin ? 1000.0 : 1.0;
    return s;
  }

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("detector temperature must be positive");
    if (kind == DetectorKind::kMahalanobis && !mahalanobis) {
      throw StateError("Mahalanobis detector used before its statistics were fitted");
    }
  }
};

struct CalibratedDetector {
  DetectorSpec spec;
  double gamma = 0.0;
};

namespace detail {

// -min_c (p - mu_c)^T P (p - mu_c) per row of pooled features p.
inline ad::Var mahalanobisScoreVar(ad::Var pooled, const MahalanobisStats& stats) {
  const Mat& x = ad::val(pooled);
  if (x.cols() != stats.means.cols()) throw ShapeError("Mahalanobis: feature dimension mismatch");
  Mat out(x.rows(), 1);
  Mat diffs(x.rows(), x.cols());  // p - mu_{argmin}
  for (Index r = 0; r < x.rows(); ++r) {
    double best = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < stats.means.rows(); ++c) {
      const RowVec diff = x.row(r) - stats.means.row(c);
      const double dist = diff * stats.precision * diff.transpose();
      if (dist < best) {
        best = dist;
        diffs.row(r) = diff;
      }
    }
    out(r, 0) = -best;
  }
  Mat precision = stats.precision;
  return pooled.tape->record(std::move(out), {pooled}, [pooled, diffs, precision](ad::Tape& t, const Mat& g) {
    // d(-diff^T P diff)/dp = -2 P diff for symmetric P.
    t.accumulate(pooled, (-2.0 * (diffs * precision)).array().colwise() * g.col(0).array());
  });
}

}  // namespace detail

// Detector score on the tape, (N*P) x d features -> N x 1. Larger means more
// in-distribution. The same path serves the canonical world (features = phi)
// and the concept world (features = reconstruction).
inline ad::Var scoreVar(const DetectorSpec& spec, const ClassifierHead& head, ad::Var feature_rows, Index patches) {
  spec.validate();
  if (spec.kind == DetectorKind::kMahalanobis) {
    if (ad::val(feature_rows).cols() != head.channels()) throw ShapeError("detector: feature channel mismatch");
    return detail::mahalanobisScoreVar(ad::maxPoolRows(feature_rows, patches), *spec.mahalanobis);
  }
  ad::Var logits = headLogits(feature_rows, head, patches);
  switch (spec.kind) {
    case DetectorKind::kMsp:
      // max softmax = exp(max logit - logsumexp)
      return ad::exp(ad::sub(ad::rowMax(logits), ad::rowLogSumExp(logits)));
    case DetectorKind::kOdin: {
      ad::Var scaled = ad::scale(logits, 1.0 / spec.temperature);
      return ad::exp(ad::sub(ad::rowMax(scaled), ad::rowLogSumExp(scaled)));
    }
    case DetectorKind::kEnergy:
      return ad::scale(ad::rowLogSumExp(ad::scale(logits, 1.0 / spec.temperature)), spec.temperature);
    default:
      break;
  }
  throw StateError("unhandled detector kind");
}

inline Vec scoreRows(const DetectorSpec& spec, const ClassifierHead& head, const Mat& feature_rows, Index patches) {
  ad::Tape tape;
  return ad::val(scoreVar(spec, head, tape.constant(feature_rows), patches)).col(0);
}

inline Vec score(const DetectorSpec& spec, const ClassifierHead& head, const FeatureTensor& z) {
  return scoreRows(spec, head, z.rows(), static_cast<Index>(z.patches()));
}

// Class means and pooled within-class covariance (1/N normalisation) of
// max-pooled features. A negative ridge selects 1e-3 * trace(Sigma) / d.
inline MahalanobisStats fitMahalanobis(const LabeledSplit& train, double ridge = -1.0) {
  const Index patches = static_cast<Index>(train.features.patches());
  const Mat pooled = maxPool(train.features.rows(), patches);
  const Index L = train.labels.numClasses();
  const Index d = pooled.cols();
  Mat means = Mat::Zero(L, d);
  std::vector<double> counts(static_cast<std::size_t>(L), 0.0);
  for (Index i = 0; i < pooled.rows(); ++i) {
    const auto y = train.labels[static_cast<std::size_t>(i)];
    means.row(y) += pooled.row(i);
    counts[y] += 1.0;
  }
  for (Index c = 0; c < L; ++c) {
    if (counts[static_cast<std::size_t>(c)] < 2.0) {
      throw ArgumentError("Mahalanobis fit needs at least two samples of class " + std::to_string(c));
    }
    means.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  Mat cov = Mat::Zero(d, d);
  for (Index i = 0; i < pooled.rows(); ++i) {
    const RowVec diff = pooled.row(i) - means.row(train.labels[static_cast<std::size_t>(i)]);
    cov += diff.transpose() * diff;
  }
  cov /= static_cast<double>(pooled.rows());
  if (ridge < 0.0) ridge = 1e-3 * cov.trace() / static_cast<double>(d);
  cov += ridge * Mat::Identity(d, d);

  Eigen::SelfAdjointEigenSolver<Mat> eig(cov, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * std::max(hi, 1e-300))) {
    throw NumericError("Mahalanobis covariance is singular (smallest eigenvalue " + std::to_string(lo) + ")");
  }
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("Mahalanobis covariance is not positive definite");
  Mat precision = llt.solve(Mat::Identity(d, d));
  precision = 0.5 * (precision + precision.transpose());
  return {std::move(means), std::move(precision), ridge};
}

// Threshold from sorted ID validation scores: the largest observed score
// that keeps at least 95% of them at or above it.
inline double thresholdForTpr(std::vector<double> scores, double tpr = 0.95) {
  if (scores.empty()) throw ArgumentError("cannot calibrate a detector on an empty validation set");
  std::sort(scores.begin(), scores.end());
  const auto n = scores.size();
  // k = floor((1 - tpr) * n), computed in integers for the default 95%.
  std::size_t k = 0;
  if (tpr == 0.95) {
    k = (n * 5) / 100;
  } else {
    k = static_cast<std::size_t>(std::floor((1.0 - tpr) * static_cast<double>(n) + 1e-9));
  }
  return scores[std::min(k, n - 1)];
}

inline CalibratedDetector calibrate(const DetectorSpec& spec, const ClassifierHead& head, const FeatureTensor& id_val) {
  if (id_val.samples() == 0) throw ArgumentError("cannot calibrate a detector on an empty validation set");
  const Vec s = score(spec, head, id_val);
  return {spec, thresholdForTpr(std::vector<double>(s.data(), s.data() + s.size()))};
}

inline std::vector<int> decide(const CalibratedDetector& cd, const Vec& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.size()));
  for (Index i = 0; i < scores.size(); ++i) out[static_cast<std::size_t>(i)] = scores(i) >= cd.gamma ? 1 : 0;
  return out;
}

// 1 = in-distribution (score >= gamma), 0 = OOD.
inline std::vector<int> detect(const CalibratedDetector& cd, const ClassifierHead& head, const FeatureTensor& z) {
  return decide(cd, score(cd.spec, head, z));
}

inline void storeDetector(Checkpoint& ck, const CalibratedDetector& cd) {
  ck.putScalar("detector.kind", static_cast<double>(static_cast<int>(cd.spec.kind)));
  ck.putScalar("detector.temperature", cd.spec.temperature);
  ck.putScalar("detector.gamma", cd.gamma);
  if (cd.spec.mahalanobis) {
    ck.putMatrix("detector.mahal.means", cd.spec.mahalanobis->means);
    ck.putMatrix("detector.mahal.precision", cd.spec.mahalanobis->precision);
    ck.putScalar("detector.mahal.ridge", cd.spec.mahalanobis->ridge);
  }
}

inline CalibratedDetector loadDetector(const Checkpoint& ck) {
  CalibratedDetector cd;
  const int kind = static_cast<int>(std::lround(ck.getScalar("detector.kind")));
  if (kind < 0 || kind > 3) throw FormatError("checkpoint has an unknown detector kind");
  cd.spec.kind = static_cast<DetectorKind>(kind);
  cd.spec.temperature = ck.getScalar("detector.temperature");
  cd.gamma = ck.getScalar("detector.gamma");
  if (ck.has("detector.mahal.means")) {
    cd.spec.mahalanobis = MahalanobisStats{ck.getMatrix("detector.mahal.means"),
                                           ck.getMatrix("detector.mahal.precision"),
                                           ck.getScalar("detector.mahal.ridge")};
  }
  return cd;
}

}  // namespace oodx
