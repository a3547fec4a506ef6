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

#include "miniature.h"
#include "oracles.h"
#include "oodx/learn.hpp"
#include "oodx/tensorio.hpp"

namespace oodx {
namespace {

using testing::randomMatrix;

TEST(Presets, WeightTable) {
  const RegularizerWeights base = presetWeights(Preset::kBaseline, DetectorKind::kEnergy);
  EXPECT_EQ(base.mse, 0.0);
  EXPECT_EQ(base.norm, 0.0);
  EXPECT_EQ(base.sep, 0.0);
  const std::pair<DetectorKind, double> mse[] = {{DetectorKind::kMsp, 10.0},
                                                 {DetectorKind::kOdin, 1e8},
                                                 {DetectorKind::kEnergy, 1.0},
                                                 {DetectorKind::kMahalanobis, 0.1}};
  for (auto [kind, lambda] : mse) {
    const RegularizerWeights mn = presetWeights(Preset::kMseNorm, kind);
    EXPECT_EQ(mn.mse, lambda);
    EXPECT_EQ(mn.norm, 0.1);
    EXPECT_EQ(mn.sep, 0.0);
    const RegularizerWeights sep = presetWeights(Preset::kSep, kind);
    EXPECT_EQ(sep.mse, 0.0);
    EXPECT_EQ(sep.norm, 0.0);
    EXPECT_EQ(sep.sep, 50.0);
    const RegularizerWeights all = presetWeights(Preset::kAll, kind);
    EXPECT_EQ(all.mse, lambda);
    EXPECT_EQ(all.norm, 0.1);
    EXPECT_EQ(all.sep, 50.0);
  }
}

TEST(Presets, Parsing) {
  EXPECT_EQ(parsePreset("all").preset, Preset::kAll);
  EXPECT_FALSE(parsePreset("mse-norm").detector.has_value());
  const PresetSelection a = parsePreset("energy-all");
  EXPECT_EQ(a.preset, Preset::kAll);
  EXPECT_EQ(a.detector, DetectorKind::kEnergy);
  const PresetSelection b = parsePreset("mahal-mse-norm");
  EXPECT_EQ(b.preset, Preset::kMseNorm);
  EXPECT_EQ(b.detector, DetectorKind::kMahalanobis);
  EXPECT_EQ(parsePreset("odin-sep").detector, DetectorKind::kOdin);
  EXPECT_THROW(parsePreset("everything"), ConfigError);
  EXPECT_THROW(parsePreset("knn-all"), ConfigError);
  EXPECT_THROW(parsePreset("energy-most"), ConfigError);
}

TEST(Rexpl, SingleConceptEqualsNeighbourMean) {
  // One concept, one patch: the only neighbour is the concept itself.
  const Mat c = (Mat(2, 1) << 0.6, 0.8).finished();
  const FeatureTensor x(1, 1, 2, {0.6f, 0.8f});
  EXPECT_NEAR(regExpl(ConceptMatrix(c), x, 1), 1.0, 1e-7);
}

TEST(Rexpl, OrthogonalConceptsHaveNoRedundancy) {
  const Mat c = Mat::Identity(3, 3);
  const FeatureTensor x(1, 1, 3, {0.0f, 0.0f, 0.0f});
  EXPECT_EQ(regExpl(ConceptMatrix(c), x, 1), 0.0);
}

TEST(Rexpl, MatchesStraightLineOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const ConceptMatrix c = randomConcepts(5, 4, rng);
    const Mat patches = randomMatrix(30, 5, rng);
    const FeatureTensor x = FeatureTensor::fromRows(patches, 3);
    EXPECT_NEAR(regExpl(c, x, 7), testing::straightLineRexpl(c.matrix(), x.rows(), 7), 1e-12);
  }
  const FeatureTensor tiny(1, 2, 5, std::vector<float>(10, 1.0f));
  EXPECT_THROW(regExpl(randomConcepts(5, 2, rng), tiny, 3), ArgumentError);
}

TEST(Jnorm, ZeroForExactAndSquaredNormForZeroNet) {
  std::mt19937_64 rng(2);
  const ConceptMatrix identity(Mat::Identity(3, 3));
  const FeatureTensor x = FeatureTensor::fromRows(randomMatrix(8, 3, rng), 2);
  EXPECT_EQ(regNorm(identity, ReconstructionNet::inverseOf(identity.matrix()), x), 0.0);
  // g = 0: per-sample ||phi||^2 summed over patches, averaged over samples.
  const FeatureTensor y(1, 2, 2, {1.0f, 2.0f, 1.0f, 1.0f});
  EXPECT_DOUBLE_EQ(regNorm(ConceptMatrix(Mat::Identity(2, 2)), ReconstructionNet::zeros(2, 2, 4), y), 7.0);
}

TEST(Jmse, ZeroForExactAndShiftSquared) {
  ad::Tape tape;
  const Vec id = (Vec(3) << 1, 2, 3).finished();
  const Vec ood = (Vec(2) << -1, 0).finished();
  EXPECT_EQ(ad::val(regMseVar(tape.constant(Mat(id)), id, tape.constant(Mat(ood)), ood))(0, 0), 0.0);
  const Mat shifted_id = id.array() + 0.5;
  const Mat shifted_ood = ood.array() - 0.5;
  EXPECT_DOUBLE_EQ(ad::val(regMseVar(tape.constant(shifted_id), id, tape.constant(shifted_ood), ood))(0, 0), 0.5);
  EXPECT_THROW(regMseVar(tape.constant(Mat(id)), id, tape.constant(Mat(0, 1)), Vec(0)), ArgumentError);
}

TEST(Jmse, ZeroForExactReconstruction) {
  SyntheticSpec s;
  s.perClassN = 10;
  s.channels = 6;
  const DatasetBundle b = generateSynthetic(s);
  const ClassifierHead head = initialHead(5, 6, 0);
  const ConceptMatrix identity(Mat::Identity(6, 6));
  const ReconstructionNet g = ReconstructionNet::inverseOf(identity.matrix());
  for (DetectorKind k : {DetectorKind::kMsp, DetectorKind::kEnergy, DetectorKind::kOdin}) {
    EXPECT_EQ(regMse(identity, g, head, DetectorSpec::withDefaults(k), b.idTest.features, b.oodTest), 0.0);
  }
  EXPECT_THROW(regMse(identity, g, head, DetectorSpec::withDefaults(DetectorKind::kEnergy), b.idTest.features,
                      FeatureTensor()),
               ArgumentError);
}

TEST(Jsep, IdenticalSidesAndOneDimensionalCase) {
  ad::Tape tape;
  const Mat same = (Mat(4, 1) << 1, 2, 1, 2).finished();
  const std::vector<int> detected = {1, 1, 0, 0};
  const std::vector<std::uint32_t> predicted(4, 0);
  auto j = regSepVar(tape.constant(same), detected, predicted, 1, SeparabilityMode::kGlobal, Ridge::absolute(0.0));
  ASSERT_TRUE(j.has_value());
  EXPECT_EQ(ad::val(*j)(0, 0), 0.0);
  const Mat split = (Mat(4, 1) << 0, 2, 4, 6).finished();
  j = regSepVar(tape.constant(split), detected, predicted, 1, SeparabilityMode::kGlobal, Ridge::absolute(0.0));
  EXPECT_DOUBLE_EQ(ad::val(*j)(0, 0), 4.0);
  j = regSepVar(tape.constant(split), detected, predicted, 1, SeparabilityMode::kGlobal, Ridge::absolute(1e-9));
  EXPECT_NEAR(ad::val(*j)(0, 0), 4.0, 1e-8);
  EXPECT_FALSE(regSepVar(tape.constant(split), {1, 1, 1, 1}, predicted, 1, SeparabilityMode::kGlobal, {}).has_value());
}

TEST(Jsep, PerClassModeAveragesDefinedClasses) {
  ad::Tape tape;
  const Mat v = (Mat(8, 1) << 0, 2, 4, 6, 0, 1, 5, 5.5).finished();
  const std::vector<int> detected = {1, 1, 0, 0, 1, 1, 0, 0};
  const std::vector<std::uint32_t> predicted = {0, 0, 0, 0, 1, 1, 1, 1};
  auto j = regSepVar(tape.constant(v), detected, predicted, 3, SeparabilityMode::kPerClass, Ridge::absolute(0.0));
  ASSERT_TRUE(j.has_value());
  const double j0 = testing::traceFisher(v.topRows(2), v.middleRows(2, 2), 0.0);
  const double j1 = testing::traceFisher(v.middleRows(4, 2), v.bottomRows(2), 0.0);
  EXPECT_NEAR(ad::val(*j)(0, 0), (j0 + j1) / 2.0, 1e-12);
}

TEST(Objective, GradientsMatchFiniteDifferencesForEveryPreset) {
  const testing::Miniature mini = testing::makeMiniature(4);
  for (Preset p : {Preset::kBaseline, Preset::kMseNorm, Preset::kSep, Preset::kAll}) {
    bool skipped = true;
    EXPECT_LT(testing::objectiveGradientError(mini, DetectorKind::kEnergy, p, &skipped), 1e-3)
        << "preset " << static_cast<int>(p);
    EXPECT_FALSE(skipped);
  }
  for (DetectorKind k : {DetectorKind::kMsp, DetectorKind::kOdin, DetectorKind::kMahalanobis}) {
    EXPECT_LT(testing::objectiveGradientError(mini, k, Preset::kAll), 1e-3) << toString(k);
  }
}

class Training : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticSpec s;
    s.numClasses = 3;
    s.channels = 6;
    s.patches = 3;
    s.perClassN = 30;
    s.seed = 5;
    bundle_ = new DatasetBundle(generateSynthetic(s));
    head_ = new ClassifierHead(trainHead(bundle_->idTrain, bundle_->idVal).head);
  }
  static void TearDownTestSuite() {
    delete bundle_;
    delete head_;
  }

  static LearnConfig config(Preset p) {
    LearnConfig cfg;
    cfg.concepts = 4;
    cfg.hidden = 16;
    cfg.epochs = 3;
    cfg.batchSize = 32;
    cfg.seed = 9;
    applyPreset(cfg, p, DetectorKind::kEnergy);
    return cfg;
  }

  static TrainResult train(const LearnConfig& cfg) {
    return trainConcepts(cfg, *bundle_, *head_, DetectorSpec::withDefaults(DetectorKind::kEnergy));
  }

  static DatasetBundle* bundle_;
  static ClassifierHead* head_;
};

DatasetBundle* Training::bundle_ = nullptr;
ClassifierHead* Training::head_ = nullptr;

TEST_F(Training, ZeroEpochsReturnsTheNormalisedInitialConcepts) {
  LearnConfig cfg = config(Preset::kBaseline);
  cfg.epochs = 0;
  const TrainResult r = train(cfg);
  std::mt19937_64 rng(cfg.seed);
  EXPECT_EQ(r.state.concepts.matrix(), randomConcepts(6, 4, rng).matrix());
  EXPECT_TRUE(r.state.history.empty());
}

TEST_F(Training, BaselineLeavesDisabledTermsAtZero) {
  const TrainResult r = train(config(Preset::kBaseline));
  ASSERT_EQ(r.state.history.size(), 3u);
  for (const HistoryRow& row : r.state.history) {
    EXPECT_EQ(row.jmse, 0.0);
    EXPECT_EQ(row.jnorm, 0.0);
    EXPECT_EQ(row.jsep, 0.0);
    EXPECT_TRUE(std::isfinite(row.etaDetVal));
  }
  const std::string csv = historyCsv(r.state.history);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,crossEntropy,Rexpl,Jmse,Jnorm,Jsep,etaDetVal");
}

TEST_F(Training, ConceptsStayUnitNormAndRunsReproduce) {
  const LearnConfig cfg = config(Preset::kAll);
  const TrainResult a = train(cfg);
  const TrainResult b = train(cfg);
  const Vec norms = a.state.concepts.matrix().colwise().norm();
  for (Index i = 0; i < norms.size(); ++i) EXPECT_NEAR(norms(i), 1.0, 1e-12);
  EXPECT_EQ(a.state.concepts.matrix(), b.state.concepts.matrix());
  EXPECT_EQ(a.state.g.w1, b.state.g.w1);
  EXPECT_EQ(historyCsv(a.state.history), historyCsv(b.state.history));
  EXPECT_GT(a.state.history.back().jsep, 0.0);
}

TEST_F(Training, CrossEntropyDecreases) {
  LearnConfig cfg = config(Preset::kBaseline);
  cfg.epochs = 15;
  cfg.learningRate = 1e-2;
  const TrainResult r = train(cfg);
  EXPECT_LT(r.state.history.back().crossEntropy, r.state.history.front().crossEntropy);
}

TEST_F(Training, RejectsBadInputs) {
  LearnConfig cfg = config(Preset::kBaseline);
  cfg.lambdaSep = -1.0;
  EXPECT_THROW(train(cfg), ConfigError);
  cfg = config(Preset::kBaseline);
  DatasetBundle no_ood = *bundle_;
  no_ood.oodTrain = FeatureTensor();
  EXPECT_THROW(trainConcepts(cfg, no_ood, *head_, DetectorSpec::withDefaults(DetectorKind::kEnergy)), ShapeError);
  EXPECT_THROW(trainConcepts(cfg, *bundle_, initialHead(3, 5, 0), DetectorSpec::withDefaults(DetectorKind::kEnergy)),
               ShapeError);
}

TEST(ConceptCheckpoint, RoundTrips) {
  std::mt19937_64 rng(3);
  const ConceptMatrix c = randomConcepts(5, 3, rng);
  Checkpoint ck;
  storeConcepts(ck, c);
  const ConceptMatrix back = loadConcepts(Checkpoint::decode(ck.encode(), "memory"));
  EXPECT_TRUE(back.matrix().isApprox(c.matrix().cast<float>().cast<double>(), 0.0));
}

}  // namespace
}  // namespace oodx
