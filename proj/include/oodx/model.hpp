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
#include <numeric>
#include <random>
#include <vector>

#include "oodx/adam.hpp"
#include "oodx/autodiff.hpp"
#include "oodx/checkpoint.hpp"
#include "oodx/errors.hpp"
#include "oodx/tensor.hpp"

namespace oodx {

using ad::Index;

// Frozen classifier head h: global max-pool over patches, then a dense layer.
struct ClassifierHead {
  Mat weight;  // L x d
  Mat bias;    // 1 x L

  Index numClasses() const { return weight.rows(); }
  Index channels() const { return weight.cols(); }
};

// Two-layer perceptron g applied to every patch with shared weights:
// zhat = relu(v W1 + b1) W2 + b2.
struct ReconstructionNet {
  Mat w1;  // m x H
  Mat b1;  // 1 x H
  Mat w2;  // H x d
  Mat b2;  // 1 x d

  Index inputs() const { return w1.rows(); }
  Index hidden() const { return w1.cols(); }
  Index outputs() const { return w2.cols(); }

  static ReconstructionNet random(Index concepts, Index channels, Index hidden, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    ReconstructionNet g;
    const double s1 = std::sqrt(2.0 / static_cast<double>(concepts));
    const double s2 = std::sqrt(1.0 / static_cast<double>(hidden));
    g.w1 = Mat(concepts, hidden);
    for (Index i = 0; i < g.w1.size(); ++i) g.w1.data()[i] = s1 * normal(rng);
    g.b1 = Mat::Zero(1, hidden);
    g.w2 = Mat(hidden, channels);
    for (Index i = 0; i < g.w2.size(); ++i) g.w2.data()[i] = s2 * normal(rng);
    g.b2 = Mat::Zero(1, channels);
    return g;
  }

  static ReconstructionNet zeros(Index concepts, Index channels, Index hidden) {
    return {Mat::Zero(concepts, hidden), Mat::Zero(1, hidden), Mat::Zero(hidden, channels),
            Mat::Zero(1, channels)};
  }

  // Exact inverse of v = z C for a d x d orthonormal C, using
  // z = relu(v C^T) - relu(-v C^T).
  static ReconstructionNet inverseOf(const Mat& orthonormal) {
    const Index d = orthonormal.rows();
    ReconstructionNet g;
    g.w1 = Mat(orthonormal.cols(), 2 * d);
    g.w1 << orthonormal.transpose(), -orthonormal.transpose();
    g.b1 = Mat::Zero(1, 2 * d);
    g.w2 = Mat(2 * d, d);
    g.w2 << Mat::Identity(d, d), -Mat::Identity(d, d);
    g.b2 = Mat::Zero(1, d);
    return g;
  }
};

// Tape handles for the parameters of g.
struct NetVars {
  ad::Var w1, b1, w2, b2;

  static NetVars bind(ad::Tape& tape, const ReconstructionNet& g, bool trainable) {
    auto leaf = [&](const Mat& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
    return {leaf(g.w1), leaf(g.b1), leaf(g.w2), leaf(g.b2)};
  }
};

// (N*P) x m concept scores -> (N*P) x d reconstruction.
inline ad::Var reconstructVar(ad::Var scores, const NetVars& g) {
  if (ad::val(scores).cols() != ad::val(g.w1).rows()) {
    throw ShapeError("reconstruct: concept count does not match W1 rows");
  }
  ad::Var hidden = ad::relu(ad::addRow(ad::matmul(scores, g.w1), g.b1));
  return ad::addRow(ad::matmul(hidden, g.w2), g.b2);
}

inline Mat reconstruct(const ReconstructionNet& g, const Mat& score_rows) {
  if (score_rows.cols() != g.w1.rows()) throw ShapeError("reconstruct: concept count does not match W1 rows");
  Mat hidden = ((score_rows * g.w1).rowwise() + g.b1.row(0)).cwiseMax(0.0);
  return (hidden * g.w2).rowwise() + g.b2.row(0);
}

// (N*P) x d features -> N x L logits. Head parameters enter as constants, so
// no gradient is ever produced for them.
inline ad::Var headLogits(ad::Var feature_rows, const ClassifierHead& head, Index patches) {
  ad::Tape& tape = *feature_rows.tape;
  if (ad::val(feature_rows).cols() != head.channels()) {
    throw ShapeError("head: feature channels do not match head weight columns");
  }
  ad::Var pooled = ad::maxPoolRows(feature_rows, patches);
  ad::Var wt = tape.constant(head.weight.transpose());
  return ad::addRow(ad::matmul(pooled, wt), tape.constant(head.bias));
}

inline Mat maxPool(const Mat& rows, Index patches) {
  if (patches <= 0 || rows.rows() % patches != 0) throw ShapeError("maxPool: rows not divisible by patch count");
  const Index n = rows.rows() / patches;
  Mat out(n, rows.cols());
  for (Index s = 0; s < n; ++s) out.row(s) = rows.middleRows(s * patches, patches).colwise().maxCoeff();
  return out;
}

inline Mat softmaxRows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const auto e = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

struct HeadOutput {
  Mat logits;  // N x L
  Mat probs;   // N x L
};

inline Mat headLogitsFromRows(const ClassifierHead& head, const Mat& rows, Index patches) {
  if (rows.cols() != head.channels()) throw ShapeError("head: feature channels do not match head weight columns");
  return (maxPool(rows, patches) * head.weight.transpose()).rowwise() + head.bias.row(0);
}

inline HeadOutput headForward(const ClassifierHead& head, const FeatureTensor& z) {
  Mat logits = headLogitsFromRows(head, z.rows(), static_cast<Index>(z.patches()));
  Mat probs = softmaxRows(logits);
  return {std::move(logits), std::move(probs)};
}

inline std::vector<std::uint32_t> argmaxRows(const Mat& m) {
  std::vector<std::uint32_t> out(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) {
    Index c = 0;
    m.row(r).maxCoeff(&c);
    out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(c);
  }
  return out;
}

inline double accuracy(std::span<const std::uint32_t> predicted, const LabelVector& labels) {
  if (predicted.size() != labels.size() || labels.size() == 0) throw ShapeError("accuracy: size mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

struct HeadTrainConfig {
  int epochs = 40;
  int batchSize = 64;
  double learningRate = 1e-2;
  std::uint64_t seed = 0;
};

struct HeadTrainResult {
  ClassifierHead head;
  double validationAccuracy = 0.0;
};

inline ClassifierHead initialHead(Index classes, Index channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  ClassifierHead h{Mat(classes, channels), Mat::Zero(1, classes)};
  for (Index i = 0; i < h.weight.size(); ++i) h.weight.data()[i] = normal(rng);
  return h;
}

// Fits the head by minimising softmax cross-entropy with Adam. Because the
// pooling is fixed, training runs on pooled features directly.
inline HeadTrainResult trainHead(const LabeledSplit& train, const LabeledSplit& val,
                                 const HeadTrainConfig& cfg = {}) {
  if (cfg.epochs < 0 || cfg.batchSize <= 0 || !(cfg.learningRate > 0.0)) {
    throw ConfigError("head training config is invalid");
  }
  const Index patches = static_cast<Index>(train.features.patches());
  const Index classes = train.labels.numClasses();
  const Mat pooled = maxPool(train.features.rows(), patches);
  ClassifierHead head = initialHead(classes, pooled.cols(), cfg.seed);
  Mat wt = head.weight.transpose();

  Adam adam(AdamOptions{cfg.learningRate});
  adam.addParameter(wt);
  adam.addParameter(head.bias);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(static_cast<std::size_t>(pooled.rows()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batchSize)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batchSize));
      Mat x(static_cast<Index>(stop - start), pooled.cols());
      std::vector<Index> y;
      for (std::size_t i = start; i < stop; ++i) {
        x.row(static_cast<Index>(i - start)) = pooled.row(static_cast<Index>(order[i]));
        y.push_back(train.labels[order[i]]);
      }
      ad::Tape tape;
      ad::Var w = tape.parameter(wt);
      ad::Var b = tape.parameter(head.bias);
      ad::Var logits = ad::addRow(ad::matmul(tape.constant(std::move(x)), w), b);
      ad::Var loss = ad::mean(ad::sub(ad::rowLogSumExp(logits), ad::pickColumns(logits, std::move(y))));
      const double value = ad::val(loss)(0, 0);
      if (!std::isfinite(value)) throw TrainingError("head training loss is not finite", epoch);
      tape.backward(loss);
      adam.update({&wt, &head.bias}, {tape.grad(w), tape.grad(b)});
    }
  }
  head.weight = wt.transpose();

  HeadTrainResult result{head, 0.0};
  if (val.features.samples() > 0) {
    result.validationAccuracy = accuracy(argmaxRows(headForward(head, val.features).logits), val.labels);
  }
  return result;
}

inline void storeHead(Checkpoint& ck, const ClassifierHead& h) {
  ck.putMatrix("head.weight", h.weight);
  ck.putMatrix("head.bias", h.bias);
}

inline ClassifierHead loadHead(const Checkpoint& ck) {
  ClassifierHead h{ck.getMatrix("head.weight"), ck.getMatrix("head.bias")};
  if (h.bias.rows() != 1 || h.bias.cols() != h.weight.rows()) throw FormatError("head.bias has the wrong shape");
  return h;
}

inline void storeNet(Checkpoint& ck, const ReconstructionNet& g) {
  ck.putMatrix("g.w1", g.w1);
  ck.putMatrix("g.b1", g.b1);
  ck.putMatrix("g.w2", g.w2);
  ck.putMatrix("g.b2", g.b2);
}

inline ReconstructionNet loadNet(const Checkpoint& ck) {
  ReconstructionNet g{ck.getMatrix("g.w1"), ck.getMatrix("g.b1"), ck.getMatrix("g.w2"), ck.getMatrix("g.b2")};
  if (g.b1.cols() != g.w1.cols() || g.w2.rows() != g.w1.cols() || g.b2.cols() != g.w2.cols()) {
    throw FormatError("reconstruction network blocks have inconsistent shapes");
  }
  return g;
}

}  // namespace oodx
