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
#include <random>
#include <vector>

#include "oodx/autodiff.hpp"
#include "oodx/errors.hpp"
#include "oodx/tensor.hpp"

namespace oodx {

using ad::Index;

// d x m matrix whose columns are unit concept vectors.
class ConceptMatrix {
 public:
  ConceptMatrix() = default;

  explicit ConceptMatrix(Mat vectors) : c_(std::move(vectors)) {
    if (c_.cols() < 1 || c_.rows() < 1) throw ShapeError("concept matrix needs at least one column");
    for (Index j = 0; j < c_.cols(); ++j) {
      if (std::abs(c_.col(j).norm() - 1.0) > 1e-6) {
        throw NumericError("concept column " + std::to_string(j) + " is not unit norm");
      }
    }
  }

  const Mat& matrix() const { return c_; }
  Index channels() const { return c_.rows(); }
  Index size() const { return c_.cols(); }

  ConceptMatrix subset(const std::vector<Index>& columns) const {
    Mat out(c_.rows(), static_cast<Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i) out.col(static_cast<Index>(i)) = c_.col(columns[i]);
    return ConceptMatrix(std::move(out));
  }

 private:
  Mat c_;
};

inline ConceptMatrix normalizeColumns(const Mat& c) {
  Mat out = c;
  for (Index j = 0; j < out.cols(); ++j) {
    const double n = out.col(j).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericError("cannot normalize concept column " + std::to_string(j) + " with norm " + std::to_string(n));
    }
    out.col(j) /= n;
  }
  return ConceptMatrix(std::move(out));
}

// Columns drawn uniformly from the unit sphere.
inline ConceptMatrix randomConcepts(Index channels, Index count, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat c(channels, count);
  for (Index i = 0; i < c.size(); ++i) c.data()[i] = normal(rng);
  return normalizeColumns(c);
}

// Per-patch inner products with every concept: (N*P) x d -> (N*P) x m.
inline Mat conceptScores(const ConceptMatrix& c, const Mat& feature_rows) {
  if (feature_rows.cols() != c.channels()) {
    throw ShapeError("conceptScores: features have " + std::to_string(feature_rows.cols()) +
                     " channels, concepts have " + std::to_string(c.channels()));
  }
  return feature_rows * c.matrix();
}

inline ad::Var conceptScoresVar(ad::Var feature_rows, ad::Var concepts) {
  if (ad::val(feature_rows).cols() != ad::val(concepts).rows()) {
    throw ShapeError("conceptScores: channel count mismatch");
  }
  return ad::matmul(feature_rows, concepts);
}

struct ReducedScores {
  Mat values;  // N x m, non-negative
  bool detached = true;
};

enum class ReduceMode { kExact, kSmooth };

// max_p |score_p| per sample and concept, or its log-sum-exp relaxation
// alpha * log sum_p exp(|score_p| / alpha).
inline ReducedScores reduceMax(const Mat& score_rows, Index patches, ReduceMode mode, double alpha = 1e-3) {
  if (patches <= 0 || score_rows.rows() % patches != 0) throw ShapeError("reduceMax: rows not divisible by patch count");
  const Index n = score_rows.rows() / patches;
  Mat out(n, score_rows.cols());
  if (mode == ReduceMode::kExact) {
    for (Index s = 0; s < n; ++s) out.row(s) = score_rows.middleRows(s * patches, patches).cwiseAbs().colwise().maxCoeff();
    return {std::move(out), true};
  }
  if (!(alpha > 0.0)) throw ArgumentError("smooth max temperature must be positive");
  for (Index s = 0; s < n; ++s) {
    for (Index j = 0; j < score_rows.cols(); ++j) {
      const auto block = score_rows.block(s * patches, j, patches, 1).cwiseAbs();
      const double mx = block.maxCoeff();
      out(s, j) = mx + alpha * std::log((((block.array() - mx) / alpha).exp()).sum());
    }
  }
  return {std::move(out), false};
}

inline ad::Var reduceSmoothVar(ad::Var score_rows, Index patches, double alpha) {
  return ad::smoothMaxAbsRows(score_rows, patches, alpha);
}

struct DedupResult {
  ConceptMatrix concepts;
  std::vector<Index> kept;
  // For every input column, the position in `kept` of the column it
  // duplicates (its own position when kept) and the sign of their inner
  // product.
  std::vector<Index> representative;
  std::vector<double> sign;
};

// Greedy scan in column order: column j is dropped when |<c_j, c_k>| exceeds
// the threshold for some already retained k.
inline DedupResult deduplicate(const ConceptMatrix& c, double threshold = 0.95) {
  const Mat& m = c.matrix();
  DedupResult r;
  r.representative.resize(static_cast<std::size_t>(m.cols()));
  r.sign.resize(static_cast<std::size_t>(m.cols()), 1.0);
  for (Index j = 0; j < m.cols(); ++j) {
    Index match = -1;
    double dot = 0.0;
    for (std::size_t t = 0; t < r.kept.size(); ++t) {
      dot = m.col(j).dot(m.col(r.kept[t]));
      if (std::abs(dot) > threshold) {
        match = static_cast<Index>(t);
        break;
      }
    }
    if (match < 0) {
      r.representative[static_cast<std::size_t>(j)] = static_cast<Index>(r.kept.size());
      r.kept.push_back(j);
    } else {
      r.representative[static_cast<std::size_t>(j)] = match;
      r.sign[static_cast<std::size_t>(j)] = dot < 0.0 ? -1.0 : 1.0;
    }
  }
  r.concepts = c.subset(r.kept);
  return r;
}

}  // namespace oodx
