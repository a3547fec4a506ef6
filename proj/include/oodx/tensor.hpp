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
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oodx/errors.hpp"

namespace oodx {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

// Layer activations for N samples, each with P spatial patches of d channels.
// Storage is row-major (sample, patch, channel) single precision, which is
// also the on-disk layout of the .cft format.
class FeatureTensor {
 public:
  FeatureTensor() = default;

  FeatureTensor(std::size_t samples, std::size_t patches, std::size_t channels,
                std::vector<float> data)
      : samples_(samples), patches_(patches), channels_(channels), data_(std::move(data)) {
    if (samples_ == 0 || patches_ == 0 || channels_ == 0) {
      throw ShapeError("FeatureTensor dimensions must be positive");
    }
    if (data_.size() != samples_ * patches_ * channels_) {
      throw ShapeError("FeatureTensor payload has " + std::to_string(data_.size()) +
                       " values, expected " +
                       std::to_string(samples_ * patches_ * channels_));
    }
    for (float v : data_) {
      if (!std::isfinite(v)) throw DataError("FeatureTensor contains a non-finite value");
    }
  }

  // Builds a tensor from an (N*P) x d matrix whose row n*P + p holds patch p
  // of sample n.
  static FeatureTensor fromRows(const Mat& rows, std::size_t patches) {
    if (patches == 0 || rows.rows() % static_cast<Eigen::Index>(patches) != 0) {
      throw ShapeError("row count is not a multiple of the patch count");
    }
    std::vector<float> data(static_cast<std::size_t>(rows.size()));
    const auto cols = static_cast<std::size_t>(rows.cols());
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        data[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)] =
            static_cast<float>(rows(r, c));
      }
    }
    return FeatureTensor(static_cast<std::size_t>(rows.rows()) / patches, patches, cols,
                         std::move(data));
  }

  std::size_t samples() const { return samples_; }
  std::size_t patches() const { return patches_; }
  std::size_t channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }

  float at(std::size_t n, std::size_t p, std::size_t c) const {
    return data_[(n * patches_ + p) * channels_ + c];
  }

  // (N*P) x d double matrix, the shape every computation consumes.
  Mat rows() const {
    Mat out(static_cast<Eigen::Index>(samples_ * patches_), static_cast<Eigen::Index>(channels_));
    for (std::size_t r = 0; r < samples_ * patches_; ++r) {
      for (std::size_t c = 0; c < channels_; ++c) {
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data_[r * channels_ + c];
      }
    }
    return out;
  }

  FeatureTensor select(std::span<const std::size_t> indices) const {
    std::vector<float> out;
    out.reserve(indices.size() * patches_ * channels_);
    const std::size_t stride = patches_ * channels_;
    for (std::size_t n : indices) {
      if (n >= samples_) throw ShapeError("sample index out of range");
      out.insert(out.end(), data_.begin() + static_cast<std::ptrdiff_t>(n * stride),
                 data_.begin() + static_cast<std::ptrdiff_t>((n + 1) * stride));
    }
    return FeatureTensor(indices.size(), patches_, channels_, std::move(out));
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

 private:
  std::size_t samples_ = 0;
  std::size_t patches_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

class LabelVector {
 public:
  LabelVector() = default;

  LabelVector(std::vector<std::uint32_t> labels, std::uint32_t num_classes)
      : labels_(std::move(labels)), num_classes_(num_classes) {
    if (num_classes_ < 2) throw DataError("label set needs at least two classes");
    for (auto y : labels_) {
      if (y >= num_classes_) {
        throw DataError("label " + std::to_string(y) + " out of range for " +
                        std::to_string(num_classes_) + " classes");
      }
    }
  }

  std::size_t size() const { return labels_.size(); }
  std::uint32_t numClasses() const { return num_classes_; }
  std::uint32_t operator[](std::size_t i) const { return labels_[i]; }
  std::span<const std::uint32_t> values() const { return labels_; }

  LabelVector select(std::span<const std::size_t> indices) const {
    std::vector<std::uint32_t> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels_.at(i));
    return LabelVector(std::move(out), num_classes_);
  }

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::vector<std::uint32_t> labels_;
  std::uint32_t num_classes_ = 0;
};

struct LabeledSplit {
  FeatureTensor features;
  LabelVector labels;

  friend bool operator==(const LabeledSplit&, const LabeledSplit&) = default;
};

struct DatasetBundle {
  LabeledSplit idTrain;
  LabeledSplit idVal;
  LabeledSplit idTest;
  FeatureTensor oodTrain;
  FeatureTensor oodVal;
  FeatureTensor oodTest;

  std::size_t patches() const { return idTrain.features.patches(); }
  std::size_t channels() const { return idTrain.features.channels(); }
  std::uint32_t numClasses() const { return idTrain.labels.numClasses(); }

  // All members share P and d; labels line up with their features.
  void validate() const {
    const std::size_t p = patches();
    const std::size_t d = channels();
    auto check = [&](const FeatureTensor& t, const char* name) {
      if (t.patches() != p || t.channels() != d) {
        throw ShapeError(std::string("split ") + name + " has mismatched patch/channel dims");
      }
    };
    check(idTrain.features, "idTrain");
    check(idVal.features, "idVal");
    check(idTest.features, "idTest");
    check(oodTrain, "oodTrain");
    check(oodVal, "oodVal");
    check(oodTest, "oodTest");
    for (const LabeledSplit* s : {&idTrain, &idVal, &idTest}) {
      if (s->labels.size() != s->features.samples()) {
        throw ShapeError("label count does not match sample count");
      }
      if (s->labels.numClasses() != numClasses()) {
        throw ShapeError("splits disagree on the number of classes");
      }
    }
  }

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

}  // namespace oodx
