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
#include <vector>

#include "oodx/errors.hpp"
#include "oodx/tensor.hpp"

namespace oodx {

struct AdamOptions {
  double learningRate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed list of parameter matrices. The optimizer keeps one pair
// of moment buffers per parameter, in registration order.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : opt_(options) {}

  void addParameter(const Mat& shape_like) {
    first_.push_back(Mat::Zero(shape_like.rows(), shape_like.cols()));
    second_.push_back(Mat::Zero(shape_like.rows(), shape_like.cols()));
  }

  std::size_t size() const { return first_.size(); }
  long step() const { return step_; }

  // Applies one descent step: params[i] -= lr * mhat / (sqrt(vhat) + eps).
  void update(const std::vector<Mat*>& params, const std::vector<Mat>& grads) {
    if (params.size() != first_.size() || grads.size() != first_.size()) {
      throw ArgumentError("Adam::update: parameter count mismatch");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Mat& g = grads[i];
      first_[i] = opt_.beta1 * first_[i] + (1.0 - opt_.beta1) * g;
      second_[i] = opt_.beta2 * second_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
      const auto mhat = first_[i].array() / bc1;
      const auto vhat = second_[i].array() / bc2;
      params[i]->array() -= opt_.learningRate * mhat / (vhat.sqrt() + opt_.epsilon);
    }
  }

 private:
  AdamOptions opt_;
  std::vector<Mat> first_;
  std::vector<Mat> second_;
  long step_ = 0;
};

}  // namespace oodx
