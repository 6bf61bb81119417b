//
// Copyright 2026 The dejavu-audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "dejavu/lab_runner.hpp"
#include "dejavu/synthetic_lab.hpp"

namespace dejavu::lab {
namespace {

constexpr int kSeeds = 5;

double Mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double SampleStd(const std::vector<double>& v) {
  const double m = Mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double TopAccuracy(const std::vector<InferenceRecord>& recs, double p) {
  return *ComputeConfidenceCurve(recs, {p}).AccuracyAt(p);
}

SceneConfig SmallScenes(std::uint64_t seed, double correlation = 0.0) {
  SceneConfig c;
  c.seed = seed;
  c.correlation = correlation;
  c.public_per_class = 200;
  return c;
}

TEST(GenerateScenesTest, DeterministicBytes) {
  const auto a = GenerateScenes(SmallScenes(3));
  const auto b = GenerateScenes(SmallScenes(3));
  EXPECT_EQ(ScenesJsonl(a), ScenesJsonl(b));
  EXPECT_EQ(OracleJsonl(a), OracleJsonl(b));
  EXPECT_NE(ScenesJsonl(a), ScenesJsonl(GenerateScenes(SmallScenes(4))));
}

TEST(GenerateScenesTest, DisjointSetsAndLedger) {
  const auto s = GenerateScenes(SmallScenes(1, 0.3));
  EXPECT_EQ(s.train_a.size(), 500u);
  EXPECT_EQ(s.train_b.size(), 500u);
  EXPECT_EQ(s.public_set.size(), 2000u);
  std::set<std::string> ids;
  for (const auto* set : {&s.train_a, &s.train_b, &s.public_set}) {
    for (const auto& sc : *set) EXPECT_TRUE(ids.insert(sc.id).second) << sc.id;
  }
  ASSERT_EQ(s.ledger.size(), ids.size());
  std::size_t correlated = 0;
  for (const auto& e : s.ledger) correlated += e.correlated_background;
  EXPECT_NEAR(static_cast<double>(correlated) / s.ledger.size(), 0.3, 0.05);
}

TEST(GenerateScenesTest, InvalidConfig) {
  auto expect_invalid = [](SceneConfig c) {
    try {
      GenerateScenes(c);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
    }
  };
  SceneConfig c;
  c.num_classes = 1;
  expect_invalid(c);
  c = {};
  c.correlation = 1.5;
  expect_invalid(c);
  c = {};
  c.scenes_per_class = 0;
  expect_invalid(c);
  c = {};
  c.background_jitter = 0.0;
  expect_invalid(c);
}

// Nearest class-centroid classifier on raw backgrounds: centroids from B,
// evaluated on A.
double CentroidOracleAccuracy(const SceneSplit& s) {
  std::vector<Eigen::VectorXd> sum(static_cast<std::size_t>(s.num_classes),
                                   Eigen::VectorXd::Zero(s.train_b.front().background.size()));
  std::vector<int> count(static_cast<std::size_t>(s.num_classes), 0);
  for (const auto& sc : s.train_b) {
    sum[static_cast<std::size_t>(sc.label)] += sc.background;
    ++count[static_cast<std::size_t>(sc.label)];
  }
  std::size_t correct = 0;
  for (const auto& sc : s.train_a) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < s.num_classes; ++c) {
      const double d = (sc.background - sum[static_cast<std::size_t>(c)] / count[static_cast<std::size_t>(c)]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    correct += best == sc.label;
  }
  return static_cast<double>(correct) / static_cast<double>(s.train_a.size());
}

TEST(GenerateScenesTest, FullCorrelationIsRecoverableByReference) {
  LabConfig cfg;
  cfg.seed = 11;
  cfg.scenes = SmallScenes(0, 1.0);
  cfg.toy.epochs = 200;
  const auto m = TrainLab(cfg);
  for (const auto& e : m.split.ledger) ASSERT_TRUE(e.correlated_background);
  const double oracle = CentroidOracleAccuracy(m.split);
  EXPECT_GE(oracle, 0.95);
  const auto audit = AuditLab(m, {});
  const double reference = TopAccuracy(audit.reference_records, 100);
  EXPECT_GE(reference, 0.9);
  EXPECT_GE(reference, oracle - 0.1);
}

TEST(GenerateScenesTest, NoCorrelationLeavesReferenceAtChance) {
  LabConfig cfg;
  cfg.seed = 12;
  cfg.scenes = SmallScenes(0, 0.0);
  cfg.toy.epochs = 300;
  const auto m = TrainLab(cfg);
  EXPECT_NEAR(CentroidOracleAccuracy(m.split), 0.1, 0.05);
  const auto audit = AuditLab(m, {});
  EXPECT_NEAR(TopAccuracy(audit.reference_records, 100), 0.1, 0.05);
}

TEST(TrainToyTest, LossDecreasesOverFirstTenEpochs) {
  const auto s = GenerateScenes(SmallScenes(5));
  for (auto loss : {LossKind::kInfoNce, LossKind::kVicRegLike}) {
    ToyConfig cfg;
    cfg.loss = loss;
    cfg.epochs = 10;
    cfg.seed = 5;
    const auto enc = TrainToy(s.train_a, cfg);
    ASSERT_EQ(enc.loss_history.size(), 10u);
    EXPECT_LT(enc.loss_history[9], enc.loss_history[0]) << LossName(loss);
  }
}

TEST(TrainToyTest, CheckpointsRecorded) {
  const auto s = GenerateScenes(SmallScenes(6));
  ToyConfig cfg;
  cfg.epochs = 6;
  cfg.checkpoints = {5, 0, 2};
  const auto enc = TrainToy(s.train_a, cfg);
  std::vector<int> epochs;
  for (const auto& c : enc.checkpoints) {
    epochs.push_back(c.epoch);
    EXPECT_TRUE(c.weights.AllFinite());
  }
  EXPECT_EQ(epochs, (std::vector<int>{0, 2, 5, 6}));
  EXPECT_THROW(enc.At(3), Error);
  EXPECT_EQ(TrainToy(s.train_a, cfg).Final().w1, enc.Final().w1);
}

TEST(TrainToyTest, Errors) {
  const auto s = GenerateScenes(SmallScenes(7));
  ToyConfig cfg;
  cfg.batch_size = 1;
  try {
    TrainToy(s.train_a, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
  }
  cfg = {};
  cfg.epochs = 3;
  cfg.loss = LossKind::kVicRegLike;
  cfg.learning_rate = 1e200;
  try {
    TrainToy(s.train_a, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
  }
}

double MaxEncoderGradientError(LossKind loss, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ToyConfig cfg;
  cfg.loss = loss;
  cfg.width = 7;
  cfg.embed_dim = 5;
  EncoderWeights w = InitWeights(6, cfg, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(10, 6, [&] { return n(rng); });
  EncoderWeights g;
  LossAndGradient(w, x, cfg, g);
  EncoderWeights scratch;
  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = LossAndGradient(w, x, cfg, scratch);
    param = saved - h;
    const double down = LossAndGradient(w, x, cfg, scratch);
    param = saved;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-3}));
  };
  for (Eigen::Index i = 0; i < w.w1.size(); ++i) check(w.w1.data()[i], g.w1.data()[i]);
  for (Eigen::Index i = 0; i < w.b1.size(); ++i) check(w.b1.data()[i], g.b1.data()[i]);
  for (Eigen::Index i = 0; i < w.w2.size(); ++i) check(w.w2.data()[i], g.w2.data()[i]);
  for (Eigen::Index i = 0; i < w.b2.size(); ++i) check(w.b2.data()[i], g.b2.data()[i]);
  return worst;
}

TEST(TrainToyTest, InfoNceGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EXPECT_LT(MaxEncoderGradientError(LossKind::kInfoNce, seed), 1e-4);
  }
}

TEST(TrainToyTest, VicRegLikeGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EXPECT_LT(MaxEncoderGradientError(LossKind::kVicRegLike, seed), 1e-4);
  }
}

TEST(FineTuneTest, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    ToyConfig cfg;
    cfg.width = 7;
    cfg.embed_dim = 5;
    EncoderWeights w = InitWeights(6, cfg, rng);
    std::normal_distribution<double> n(0.0, 1.0);
    const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(10, 6, [&] { return n(rng); });
    ClassifierHead head{Eigen::MatrixXd::NullaryExpr(3, 5, [&] { return n(rng); }),
                        Eigen::VectorXd::NullaryExpr(3, [&] { return n(rng); })};
    const std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1, 2, 2};
    EncoderWeights g;
    ClassifierHead hg;
    ClassifierLossAndGradient(w, head, x, labels, g, hg);
    EncoderWeights scratch;
    ClassifierHead hscratch;
    const double h = 1e-5;
    double worst = 0.0;
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = ClassifierLossAndGradient(w, head, x, labels, scratch, hscratch);
      param = saved - h;
      const double down = ClassifierLossAndGradient(w, head, x, labels, scratch, hscratch);
      param = saved;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-3}));
    };
    for (Eigen::Index i = 0; i < w.w1.size(); ++i) check(w.w1.data()[i], g.w1.data()[i]);
    for (Eigen::Index i = 0; i < w.b1.size(); ++i) check(w.b1.data()[i], g.b1.data()[i]);
    for (Eigen::Index i = 0; i < w.w2.size(); ++i) check(w.w2.data()[i], g.w2.data()[i]);
    for (Eigen::Index i = 0; i < w.b2.size(); ++i) check(w.b2.data()[i], g.b2.data()[i]);
    for (Eigen::Index i = 0; i < head.w.size(); ++i) check(head.w.data()[i], hg.w.data()[i]);
    for (Eigen::Index i = 0; i < head.b.size(); ++i) check(head.b.data()[i], hg.b.data()[i]);
    EXPECT_LT(worst, 1e-4);
  }
}

TEST(FineTuneTest, CheckpointsDeterminismAndAccuracy) {
  SceneConfig sc;
  sc.public_per_class = 50;
  sc.seed = 3;
  const auto split = GenerateScenes(sc);
  ToyConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 3;
  const auto base = TrainToy(split.train_a, cfg);
  FineTuneConfig f;
  f.epochs = 30;
  f.checkpoints = {0, 10};
  f.seed = 9;
  const auto a = FineTuneToy(base.Final(), split.train_a, split.num_classes, f, split.public_set);
  const auto b = FineTuneToy(base.Final(), split.train_a, split.num_classes, f, split.public_set);
  ASSERT_EQ(a.encoder.checkpoints.size(), 3u);
  EXPECT_EQ(a.encoder.checkpoints[2].epoch, 30);
  EXPECT_EQ(a.encoder.loss_history.size(), 30u);
  EXPECT_TRUE(a.encoder.At(0).w1 == base.Final().w1);
  EXPECT_TRUE(a.encoder.Final().w1 == b.encoder.Final().w1);
  EXPECT_EQ(a.eval_accuracy, b.eval_accuracy);
  EXPECT_LT(a.encoder.loss_history.back(), a.encoder.loss_history.front());
  EXPECT_GE(a.eval_accuracy.back(), 0.9);
}

TEST(FineTuneTest, Errors) {
  SceneConfig sc;
  sc.public_per_class = 1;
  const auto split = GenerateScenes(sc);
  ToyConfig cfg;
  cfg.epochs = 0;
  const auto base = TrainToy(split.train_a, cfg);
  FineTuneConfig f;
  f.batch_size = 0;
  EXPECT_THROW(FineTuneToy(base.Final(), split.train_a, split.num_classes, f), Error);
  f.batch_size = 10;
  f.learning_rate = 1e300;
  f.epochs = 5;
  try {
    FineTuneToy(base.Final(), split.train_a, split.num_classes, f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
  }
}

TEST(LabConfigTest, JsonRoundTripWithFineTune) {
  LabConfig c;
  c.seed = 4;
  c.finetune = FineTuneConfig{};
  c.finetune->checkpoints = {0, 5};
  const auto back = LabConfigFromJson(LabConfigToJson(c));
  ASSERT_TRUE(back.finetune.has_value());
  EXPECT_EQ(back.finetune->checkpoints, (std::vector<int>{0, 5}));
  EXPECT_EQ(LabConfigToJson(back).dump(), LabConfigToJson(c).dump());
  Json bad = LabConfigToJson(c);
  bad["finetune"]["momentum"] = 0.9;
  EXPECT_THROW(LabConfigFromJson(bad), Error);
}

TEST(TrainToyTest, VicRegLikeTermsAtKnownPoints) {
  // Identical views with unit-variance, uncorrelated columns: every term is 0.
  Eigen::MatrixXd half(4, 2);
  half << 1, 1, -1, 1, 1, -1, -1, -1;
  half *= std::sqrt(3.0 / 4.0) * 1.0001;
  Eigen::MatrixXd z(8, 2);
  z << half, half;
  Eigen::MatrixXd grad;
  EXPECT_NEAR(VicRegLikeLoss(z, 25, 25, 1, grad), 0.0, 1e-12);
  // Collapsed views: variance hinge is 1 - sqrt(1e-4) per column.
  EXPECT_NEAR(VicRegLikeLoss(Eigen::MatrixXd::Zero(8, 2), 25, 25, 1, grad), 25 * (1 - 0.01), 1e-12);
}

TEST(TrainToyTest, UntrainedEncoderIsAtChance) {
  LabConfig cfg;
  cfg.seed = 13;
  cfg.toy.epochs = 0;
  const auto m = TrainLab(cfg);
  const auto audit = AuditLab(m, {});
  EXPECT_NEAR(TopAccuracy(audit.target_records, 100), 0.1, 0.05);
  EXPECT_NEAR(TopAccuracy(audit.reference_records, 100), 0.1, 0.05);
}

// Mean silhouette under Euclidean distance.
double Silhouette(const EmbeddingSet& s, const std::vector<int>& labels, int classes) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> sum(static_cast<std::size_t>(classes), 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(classes), 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto c = static_cast<std::size_t>(labels[static_cast<std::size_t>(j)]);
      sum[c] += (s.rows.row(i) - s.rows.row(j)).cast<double>().norm();
      ++cnt[c];
    }
    const auto own = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    const double a = cnt[own] ? sum[own] / cnt[own] : 0.0;
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sum.size(); ++c) {
      if (c != own && cnt[c]) b = std::min(b, sum[c] / cnt[c]);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

TEST(EmbedViewsTest, DeterministicAndTagged) {
  const auto s = GenerateScenes(SmallScenes(8));
  ToyConfig cfg;
  cfg.epochs = 5;
  const auto enc = TrainToy(s.train_a, cfg);
  const auto e1 = EmbedViews(enc.Final(), s.train_a, SceneView::kBackground, 1, {"A", 0, 5, View::kFull, "t"});
  const auto e2 = EmbedViews(enc.Final(), s.train_a, SceneView::kBackground, 1, {"A", 0, 5, View::kFull, "t"});
  EXPECT_EQ(e1.rows, e2.rows);
  EXPECT_EQ(e1.meta.layer_index, 1);
  EXPECT_EQ(e1.meta.view, View::kPeriphery);
  EXPECT_EQ(e1.meta.epoch, 5);
  EXPECT_NO_THROW(e1.Validate());
  const auto l0 = EmbedViews(enc.Final(), s.train_a, SceneView::kBackground, 0);
  EXPECT_EQ(l0.meta.layer_index, 0);
  EXPECT_EQ(l0.dim(), cfg.width);
  EXPECT_EQ(e1.dim(), cfg.embed_dim);
  EXPECT_THROW(EmbedViews(enc.Final(), s.train_a, SceneView::kFull, 2), Error);
}

TEST(EmbedViewsTest, CorrelatedBackgroundsCluster) {
  const auto s = GenerateScenes(SmallScenes(9, 1.0));
  ToyConfig cfg;
  cfg.epochs = 100;
  const auto enc = TrainToy(s.train_a, cfg);
  const auto emb = EmbedViews(enc.Final(), s.train_b, SceneView::kBackground, 1);
  std::vector<int> labels(emb.labels.begin(), emb.labels.end());
  const double true_score = Silhouette(emb, labels, 10);
  std::mt19937_64 rng(9);
  std::shuffle(labels.begin(), labels.end(), rng);
  const double shuffled = Silhouette(emb, labels, 10);
  EXPECT_GT(true_score, shuffled + 0.1);
}

TEST(OraclePartitionTest, FullCorrelationHasNoMemorization) {
  const auto s = GenerateScenes(SmallScenes(10, 1.0));
  const auto e = OracleExpectedPartition(s.ledger, {}, OutcomeAssumptions::Chance(10));
  EXPECT_EQ(e.shares[1], 0.0);
  EXPECT_EQ(e.shares[3], 1.0);
  EXPECT_EQ(e.total, 500u);
}

TEST(OraclePartitionTest, UniqueBackgroundsLeaveChanceAgreement) {
  const auto s = GenerateScenes(SmallScenes(10, 0.0));
  std::set<std::string> all;
  for (const auto& sc : s.train_a) all.insert(sc.id);
  const auto e = OracleExpectedPartition(s.ledger, all, OutcomeAssumptions::Chance(10));
  EXPECT_NEAR(e.shares[3], 0.1, 1e-12);
  EXPECT_NEAR(e.shares[1], 0.9, 1e-12);
  EXPECT_EQ(e.shares[0], 0.0);
  const auto none = OracleExpectedPartition(s.ledger, {}, OutcomeAssumptions::Chance(10));
  EXPECT_NEAR(none.shares[0], 0.81, 1e-12);
  EXPECT_NEAR(none.shares[1] + none.shares[2] + none.shares[3], 0.19, 1e-12);
  const auto b = OracleExpectedPartition(s.ledger, {}, OutcomeAssumptions::Chance(10), SceneSet::kReference);
  EXPECT_EQ(b.total, 500u);
}

struct PlantedOutcome {
  double score;
  double designed_gap;
  PartitionCounts partition;
  ExpectedPartition expected;
  double selection_precision;
};

PlantedOutcome RunPlanted(std::uint64_t seed) {
  auto scenes = SmallScenes(seed, 0.05);
  scenes.public_per_class = 500;
  const auto split = GenerateScenes(scenes);
  PlantConfig pc;
  pc.seed = seed;
  const auto run = PlantEmbeddings(split, pc);
  const auto t = Infer(KnnIndex::Build(run.target_public), run.target_queries, 100);
  const auto r = Infer(KnnIndex::Build(run.reference_public), run.reference_queries, 100);
  PlantedOutcome out;
  out.score = DejaVuScore(t, r, 20);
  out.designed_gap = PlantedGap(split, run, 20);
  out.partition = Partition(t, r);
  out.expected = OracleExpectedPartition(split.ledger, run.planted, OutcomeAssumptions::Chance(10));
  const auto sel = SelectMostMemorized(t, r, 10);
  std::size_t hits = 0;
  for (const auto& id : sel.ids) hits += run.planted.count(id);
  out.selection_precision = static_cast<double>(hits) / static_cast<double>(sel.ids.size());
  return out;
}

TEST(PlantedTest, RecoversDesignedGapPartitionAndExamples) {
  std::array<double, 4> measured{};
  std::array<double, 4> expected{};
  double score = 0.0;
  double designed = 0.0;
  double precision = 0.0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto o = RunPlanted(static_cast<std::uint64_t>(seed));
    EXPECT_GE(o.designed_gap, 0.2);
    score += o.score / kSeeds;
    designed += o.designed_gap / kSeeds;
    precision += o.selection_precision / kSeeds;
    const auto shares = o.partition.Shares();
    for (std::size_t i = 0; i < 4; ++i) {
      measured[i] += shares[i] / kSeeds;
      expected[i] += o.expected.shares[i] / kSeeds;
    }
  }
  EXPECT_NEAR(score, designed, 0.05);
  EXPECT_GE(precision, 0.8);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(measured[i], expected[i], 0.05) << CategoryName(static_cast<Category>(i));
  }
}

// Five seeds of the default lab at 500 epochs, optionally with doubled scenes
// per class.
std::vector<LabModels> TrainSeeds(int scenes_per_class) {
  std::vector<LabModels> out;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    LabConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.scenes.scenes_per_class = scenes_per_class;
    out.push_back(TrainLab(cfg));
  }
  return out;
}

const std::vector<LabModels>& BaseRuns() {
  static const auto runs = TrainSeeds(SceneConfig{}.scenes_per_class);
  return runs;
}

TEST(TrendTest, RoleSwapWithinTwoSeedStd) {
  std::vector<double> single;
  std::vector<double> swapped;
  LabAuditOptions o;
  for (const auto& m : BaseRuns()) {
    single.push_back(AuditLab(m, o).report.DefaultScore());
    o.role_swap = true;
    swapped.push_back(AuditLab(m, o).report.DefaultScore());
    o.role_swap = false;
  }
  EXPECT_LT(std::abs(Mean(swapped) - Mean(single)), 2.0 * SampleStd(single));
}

TEST(TrendTest, DatasetSizeKeepsMemorization) {
  LabAuditOptions o;
  o.probe = true;
  std::vector<double> score_base, score_doubled, gap_base, gap_doubled;
  const auto doubled = TrainSeeds(2 * SceneConfig{}.scenes_per_class);
  for (int i = 0; i < kSeeds; ++i) {
    const auto a = AuditLab(BaseRuns()[static_cast<std::size_t>(i)], o).report;
    const auto b = AuditLab(doubled[static_cast<std::size_t>(i)], o).report;
    score_base.push_back(a.DefaultScore());
    score_doubled.push_back(b.DefaultScore());
    gap_base.push_back(a.linear_probe->gap);
    gap_doubled.push_back(b.linear_probe->gap);
  }
  ::testing::Test::RecordProperty("score_delta", std::to_string(Mean(score_doubled) - Mean(score_base)));
  ::testing::Test::RecordProperty("probe_gap_delta", std::to_string(Mean(gap_doubled) - Mean(gap_base)));
  EXPECT_GE(Mean(score_base), 0.2);
  EXPECT_GE(Mean(score_doubled), 0.2);
  EXPECT_LT(std::abs(Mean(gap_base)), 0.1);
  EXPECT_LT(std::abs(Mean(gap_doubled)), 0.1);
}

TEST(TrendTest, FineTuneLowersScoreWhileAccuracyRises) {
  FineTuneConfig f;
  f.epochs = 10;
  f.checkpoints = {0};
  LabAuditOptions o;
  std::vector<double> before, after, acc_before, acc_after;
  for (const auto& m : BaseRuns()) {
    const auto ft = FineTuneLab(m, f);
    o.epoch = 0;
    before.push_back(AuditLab(ft.models, o).report.DefaultScore());
    o.epoch = 10;
    after.push_back(AuditLab(ft.models, o).report.DefaultScore());
    acc_before.push_back(ft.target_accuracy.front());
    acc_after.push_back(ft.target_accuracy.back());
  }
  ::testing::Test::RecordProperty("score_before", std::to_string(Mean(before)));
  ::testing::Test::RecordProperty("score_after", std::to_string(Mean(after)));
  EXPECT_LT(Mean(after), Mean(before));
  EXPECT_GT(Mean(acc_after), Mean(acc_before) + 0.5);
}

}  // namespace
}  // namespace dejavu::lab
