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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.h"
#include "oodx/concepts.hpp"
#include "oodx/learn.hpp"

namespace oodx {
namespace {

using testing::randomMatrix;

TEST(ConceptScores, InnerProductsWithUnitConcepts) {
  const Mat patch = (Mat(1, 2) << 1, 0).finished();
  EXPECT_EQ(conceptScores(ConceptMatrix((Mat(2, 1) << 1, 0).finished()), patch)(0, 0), 1.0);
  EXPECT_EQ(conceptScores(ConceptMatrix((Mat(2, 1) << 0, 1).finished()), patch)(0, 0), 0.0);
  EXPECT_THROW(conceptScores(ConceptMatrix(Mat::Identity(3, 3)), patch), ShapeError);
}

TEST(ConceptScores, OrthonormalConceptsPreservePatchNorms) {
  std::mt19937_64 rng(1);
  const Mat q = Eigen::HouseholderQR<Mat>(randomMatrix(6, 6, rng)).householderQ();
  const Mat z = randomMatrix(30, 6, rng);
  const Mat v = conceptScores(ConceptMatrix(q), z);
  for (Index r = 0; r < z.rows(); ++r) EXPECT_NEAR(v.row(r).norm(), z.row(r).norm(), 1e-12);
}

TEST(ConceptScores, AreLinearInTheFeatures) {
  std::mt19937_64 rng(2);
  const ConceptMatrix c = randomConcepts(5, 3, rng);
  const Mat a = randomMatrix(8, 5, rng);
  const Mat b = randomMatrix(8, 5, rng);
  EXPECT_TRUE(conceptScores(c, a + b).isApprox(conceptScores(c, a) + conceptScores(c, b), 1e-12));
}

TEST(ReduceMax, HandValues) {
  const Mat single = (Mat(2, 1) << -0.7, 0.4).finished();
  EXPECT_EQ(reduceMax(single, 1, ReduceMode::kExact).values, single.cwiseAbs());
  EXPECT_TRUE(reduceMax(single, 1, ReduceMode::kSmooth).values.isApprox(single.cwiseAbs(), 1e-15));
  EXPECT_NEAR(reduceMax((Mat(2, 1) << 0.2, 0.9).finished(), 2, ReduceMode::kSmooth, 1e-3).values(0, 0), 0.9, 1e-3);
  EXPECT_EQ(reduceMax((Mat(2, 1) << -0.5, 0.3).finished(), 2, ReduceMode::kExact).values(0, 0), 0.5);
  EXPECT_THROW(reduceMax(single, 0, ReduceMode::kExact), ShapeError);
  EXPECT_THROW(reduceMax(single, 1, ReduceMode::kSmooth, 0.0), ArgumentError);
}

TEST(ReduceMax, SmoothIsAnUpperBoundWithinAlphaLogP) {
  std::mt19937_64 rng(3);
  for (Index patches : {1, 2, 5, 9}) {
    for (double alpha : {1e-3, 0.1, 1.0}) {
      const Mat s = randomMatrix(patches * 20, 4, rng, 2.0);
      const Mat exact = reduceMax(s, patches, ReduceMode::kExact).values;
      const Mat smooth = reduceMax(s, patches, ReduceMode::kSmooth, alpha).values;
      const Mat gap = smooth - exact;
      EXPECT_GE(gap.minCoeff(), 0.0);
      EXPECT_LE(gap.maxCoeff(), alpha * std::log(static_cast<double>(patches)) + 1e-12);
    }
  }
}

TEST(ReduceMax, TapeVersionMatches) {
  std::mt19937_64 rng(4);
  const Mat s = randomMatrix(12, 3, rng);
  ad::Tape tape;
  EXPECT_TRUE(ad::val(reduceSmoothVar(tape.constant(s), 3, 0.05)).isApprox(reduceMax(s, 3, ReduceMode::kSmooth, 0.05).values, 1e-14));
}

TEST(Normalize, HandAndIdempotence) {
  const ConceptMatrix c = normalizeColumns((Mat(2, 1) << 3, 4).finished());
  EXPECT_DOUBLE_EQ(c.matrix()(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(c.matrix()(1, 0), 0.8);
  const Mat unit = (Mat(2, 1) << 0.6, 0.8).finished();
  EXPECT_EQ(normalizeColumns(unit).matrix(), unit);
  std::mt19937_64 rng(5);
  const Mat r = randomMatrix(4, 6, rng);
  const Mat once = normalizeColumns(r).matrix();
  EXPECT_TRUE(normalizeColumns(once).matrix().isApprox(once, 1e-15));
  EXPECT_THROW(normalizeColumns(Mat::Zero(3, 1)), NumericError);
  EXPECT_THROW(ConceptMatrix(Mat::Ones(2, 1)), NumericError);
}

TEST(Deduplicate, DropsExactDuplicates) {
  Mat c(3, 3);
  c << 1, 0, 1, 0, 1, 0, 0, 0, 0;
  const DedupResult r = deduplicate(ConceptMatrix(c));
  EXPECT_EQ(r.concepts.size(), 2);
  EXPECT_EQ(r.kept, (std::vector<Index>{0, 1}));
  EXPECT_EQ(r.representative, (std::vector<Index>{0, 1, 0}));
}

TEST(Deduplicate, KeepsOrthogonalColumns) {
  EXPECT_EQ(deduplicate(ConceptMatrix(Mat::Identity(4, 4))).concepts.size(), 4);
}

TEST(Deduplicate, ComparesCosinesAgainstTheThreshold) {
  auto at = [](double cosine) { return (Vec(2) << cosine, std::sqrt(1.0 - cosine * cosine)).finished(); };
  Mat c(2, 3);
  c.col(0) = at(1.0);
  c.col(1) = at(0.96);
  c.col(2) = at(0.90);
  // Column 1 goes (0.96 > 0.95); column 2 stays.
  const DedupResult r = deduplicate(ConceptMatrix(c));
  EXPECT_EQ(r.kept, (std::vector<Index>{0, 2}));
}

TEST(Deduplicate, IsIdempotentAndTracksSigns) {
  std::mt19937_64 rng(6);
  Mat c = randomConcepts(5, 8, rng).matrix();
  c.col(5) = -c.col(1);
  const DedupResult r = deduplicate(ConceptMatrix(c));
  EXPECT_EQ(r.sign[5], -1.0);
  EXPECT_EQ(r.representative[5], r.representative[1]);
  const DedupResult again = deduplicate(r.concepts);
  EXPECT_EQ(again.concepts.matrix(), r.concepts.matrix());
}

TEST(Deduplicate, ModelKeepsReconstructionForExactDuplicates) {
  std::mt19937_64 rng(7);
  Mat c = randomConcepts(4, 3, rng).matrix();
  Mat dup(4, 4);
  dup << c, -c.col(1);
  const ConceptModel model{ClassifierHead{Mat::Zero(2, 4), Mat::Zero(1, 2)}, ReconstructionNet::random(4, 4, 6, rng),
                           ConceptMatrix(dup)};
  const ConceptModel reduced = deduplicateModel(model);
  EXPECT_EQ(reduced.concepts.size(), 3);
  const Mat z = randomMatrix(10, 4, rng);
  EXPECT_TRUE(conceptWorldRows(reduced.g, reduced.concepts, z).isApprox(conceptWorldRows(model.g, model.concepts, z), 1e-12));
}

}  // namespace
}  // namespace oodx
