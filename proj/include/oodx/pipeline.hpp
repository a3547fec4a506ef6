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

#include <cmath>
#include <limits>

#include "oodx/concepts.hpp"
#include "oodx/detectors.hpp"
#include "oodx/model.hpp"

namespace oodx {

// Everything that defines the concept world: phi_hat = g(phi C), then h.
struct ConceptModel {
  ClassifierHead head;
  ReconstructionNet g;
  ConceptMatrix concepts;
};

inline Mat conceptWorldRows(const ReconstructionNet& g, const ConceptMatrix& c, const Mat& feature_rows) {
  return reconstruct(g, conceptScores(c, feature_rows));
}

// Scores and predicted classes of one world over a set of samples.
struct WorldView {
  Vec scores;
  std::vector<std::uint32_t> predicted;
};

inline WorldView viewOf(const DetectorSpec& spec, const ClassifierHead& head, const Mat& feature_rows, Index patches) {
  return {scoreRows(spec, head, feature_rows, patches), argmaxRows(headLogitsFromRows(head, feature_rows, patches))};
}

// Rounds every parameter to f32, matching what a checkpoint round trip yields.
inline Mat quantized(const Mat& m) { return m.cast<float>().cast<double>(); }

inline ClassifierHead quantized(const ClassifierHead& h) { return {quantized(h.weight), quantized(h.bias)}; }

inline ReconstructionNet quantized(const ReconstructionNet& g) {
  return {quantized(g.w1), quantized(g.b1), quantized(g.w2), quantized(g.b2)};
}

// Largest float not above v, so a stored threshold never rejects a score the
// in-memory threshold accepted.
inline double floorToFloat(double v) {
  float f = static_cast<float>(v);
  if (static_cast<double>(f) > v) f = std::nextafter(f, -std::numeric_limits<float>::infinity());
  return f;
}

inline CalibratedDetector quantized(const CalibratedDetector& cd) {
  CalibratedDetector out = cd;
  out.spec.temperature = static_cast<float>(cd.spec.temperature);
  if (out.spec.mahalanobis) {
    out.spec.mahalanobis->means = quantized(cd.spec.mahalanobis->means);
    out.spec.mahalanobis->precision = quantized(cd.spec.mahalanobis->precision);
    out.spec.mahalanobis->ridge = static_cast<float>(cd.spec.mahalanobis->ridge);
  }
  out.gamma = floorToFloat(cd.gamma);
  return out;
}

}  // namespace oodx
