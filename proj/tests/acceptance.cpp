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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. The first argument is the path of the dejavu-audit binary.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dejavu/dejavu.hpp"
#include "test_util.hpp"

namespace dejavu {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

int failures = 0;

void Report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  failures += pass ? 0 : 1;
}

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double Mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double SampleStd(const std::vector<double>& v) {
  const double m = Mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string List(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + Fmt(v[i]);
  return out + "]";
}

void KnnExactness() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1001);
  const int dims[] = {8, 64, 512};
  const std::size_t ks[] = {1, 10, 100};
  std::size_t mismatches = 0;
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const int dim = dims[inst % 3];
    const std::size_t k = ks[(inst / 3) % 3];
    std::uniform_int_distribution<std::size_t> size(k, 10000);
    const std::size_t n = size(rng);
    const bool ties = inst % 4 == 0;
    const auto base = testing::RandomSet(n, dim, 10, rng, ties);
    const auto queries = testing::RandomSet(8, dim, 10, rng, ties);
    const auto index = KnnIndex::Build(base);
    const auto got = QueryBatch(index, queries.rows, k);
    for (Eigen::Index q = 0; q < queries.rows.rows(); ++q) {
      const auto oracle = testing::NaiveKnn(base.rows, queries.rows.data() + q * dim, k);
      const auto& list = got[static_cast<std::size_t>(q)];
      if (list.size() != k) {
        ++mismatches;
        continue;
      }
      for (std::size_t i = 0; i < k; ++i) {
        if (list[i].row != oracle[i].row) ++mismatches;
        const double want = static_cast<double>(oracle[i].distance);
        const double rel = want == 0.0 ? std::abs(list[i].squared_distance)
                                       : std::abs(list[i].squared_distance - want) / want;
        worst = std::max(worst, rel);
      }
    }
  }
  const double secs = Seconds(start);
  Report("knn-exactness", mismatches == 0 && worst <= 1e-5 && secs < 120.0,
         "200 instances, " + std::to_string(mismatches) + " index mismatches, max relative distance error " +
             Fmt(worst, 3) + ", " + Fmt(secs, 3) + " s including the oracle");
}

void ConfidenceBounds() {
  bool pass = true;
  std::string detail;
  for (std::size_t c : {2u, 3u, 10u, 100u, 1000u}) {
    std::vector<double> one_hot(c, 0.0);
    one_hot[c / 2] = 1.0;
    if (NegativeEntropy(one_hot) != 0.0) pass = false;
    std::vector<double> uniform(c, 1.0 / static_cast<double>(c));
    if (std::abs(NegativeEntropy(uniform) + std::log(static_cast<double>(c))) > 1e-9) pass = false;
  }
  // Through the inference path as well: k identical-label neighbors.
  EmbeddingSet pub;
  pub.rows = Matrix::Zero(20, 2);
  for (int i = 0; i < 20; ++i) {
    pub.rows(i, 0) = static_cast<float>(i);
    pub.ids.push_back(testing::RowId(static_cast<std::size_t>(i)));
    pub.labels.push_back(i < 10 ? 3 : i % 4);
  }
  EmbeddingSet q;
  q.rows = Matrix::Zero(1, 2);
  q.ids = {"q"};
  q.labels = {3};
  const auto rec = Infer(KnnIndex::Build(pub), q, 10)[0];
  if (rec.confidence != 0.0) pass = false;
  std::mt19937_64 rng(1002);
  std::gamma_distribution<double> g(0.5, 1.0);
  std::uniform_int_distribution<int> classes(2, 50);
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> p(static_cast<std::size_t>(classes(rng)));
    double s = 0.0;
    for (auto& v : p) s += (v = g(rng));
    for (auto& v : p) v /= s;
    const double h = NegativeEntropy(p);
    if (h > 0.0 || h < -std::log(static_cast<double>(p.size())) - 1e-12) ++violations;
  }
  pass = pass && violations == 0;
  Report("confidence-bounds", pass,
         "one-hot exactly 0, uniform within 1e-9 of -ln C, " + std::to_string(violations) +
             " bound violations in 10000 random vectors");
}

void ScoreIdentities() {
  std::mt19937_64 rng(1003);
  std::size_t failures_here = 0;
  for (int set = 0; set < 100; ++set) {
    std::uniform_int_distribution<std::size_t> size(1, 400);
    const std::size_t n = size(rng);
    std::uniform_int_distribution<int> label(0, 4);
    std::uniform_int_distribution<int> grid(0, 9);
    std::vector<InferenceRecord> t(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int truth = label(rng);
      t[i] = {testing::RowId(i), truth, label(rng), {}, -0.1 * grid(rng), {}, {}, {}};
      r[i] = {testing::RowId(i), truth, label(rng), {}, -0.1 * grid(rng), {}, {}, {}};
    }
    std::shuffle(r.begin(), r.end(), rng);
    for (double p : {1.0, 20.0, 50.0, 100.0}) {
      if (DejaVuScore(r, r, p) != 0.0) ++failures_here;
      if (DejaVuScore(t, r, p) != -DejaVuScore(r, t, p)) ++failures_here;
    }
    const auto counts = Partition(t, r);
    std::array<std::size_t, 4> brute{};
    std::map<std::string, bool> ref_correct;
    for (const auto& x : r) ref_correct[x.example_id] = x.correct();
    for (const auto& x : t) {
      const bool tc = x.predicted_label == x.true_label;
      const bool rc = ref_correct.at(x.example_id);
      brute[tc && rc ? 3 : tc ? 1 : rc ? 2 : 0]++;
    }
    if (counts.unassociated + counts.memorized + counts.misrepresented + counts.correlated != n ||
        counts.total != n || counts.unassociated != brute[0] || counts.memorized != brute[1] ||
        counts.misrepresented != brute[2] || counts.correlated != brute[3]) {
      ++failures_here;
    }
  }
  Report("score-identities", failures_here == 0,
         "100 record sets x p in {1, 20, 50, 100}, " + std::to_string(failures_here) + " violations");
}

void CropOracle() {
  std::mt19937_64 rng(1004);
  std::size_t mismatches = 0;
  for (int inst = 0; inst < 50; ++inst) {
    std::uniform_int_distribution<int> side(1, 64);
    std::uniform_int_distribution<int> count(0, 5);
    const int w = side(rng);
    const int h = side(rng);
    const auto boxes = testing::RandomBoxes(w, h, count(rng), rng);
    const auto crop = PeripheryCrop(w, h, boxes);
    const auto best = testing::BruteForceBest(w, h, boxes, 1, CropShape::kRectangle);
    const std::int64_t area = crop ? crop->area() : 0;
    bool clean = true;
    if (crop) {
      for (const auto& b : boxes) {
        if (crop->x0 < b.x1 && b.x0 < crop->x1 && crop->y0 < b.y1 && b.y0 < crop->y1) clean = false;
      }
    }
    if (area != best || !clean) ++mismatches;
  }
  Report("crop-oracle", mismatches == 0,
         "50 instances up to 64x64 with up to 5 boxes, " + std::to_string(mismatches) + " mismatches");
}

// Five lab seeds trained once to 1000 epochs with the default configuration;
// the 500-epoch checkpoint equals a default 500-epoch run.
struct LabRuns {
  std::vector<lab::LabModels> models;
  std::vector<double> train_seconds;
};

LabRuns TrainLabSeeds() {
  LabRuns runs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    lab::LabConfig cfg;
    cfg.seed = seed;
    cfg.toy.epochs = 1000;
    cfg.toy.checkpoints = {50, 250, 500};
    const auto start = Clock::now();
    runs.models.push_back(lab::TrainLab(cfg));
    runs.train_seconds.push_back(Seconds(start));
  }
  return runs;
}

lab::LabAudit Audit(const lab::LabModels& m, int epoch, int layer, std::size_t k) {
  lab::LabAuditOptions o;
  o.epoch = epoch;
  o.layer = layer;
  o.k = k;
  return lab::AuditLab(m, o);
}

void PlantedRecovery(const LabRuns& runs) {
  std::vector<double> reference, score, seconds;
  bool pass = true;
  for (std::size_t i = 0; i < runs.models.size(); ++i) {
    const auto start = Clock::now();
    const auto a = Audit(runs.models[i], 500, 1, 100);
    reference.push_back(*ComputeConfidenceCurve(a.reference_records, {100}).AccuracyAt(100));
    score.push_back(a.report.DefaultScore());
    // Training to 500 epochs is half of the 1000-epoch run.
    seconds.push_back(runs.train_seconds[i] / 2 + Seconds(start));
    pass = pass && std::abs(reference.back() - 0.1) <= 0.05 && score.back() >= 0.20 && seconds.back() <= 900;
  }
  Report("planted-recovery", pass,
         "reference top-100% accuracy " + List(reference) + " (1/C = 0.1), score@20 " + List(score) +
             ", seconds per seed " + List(seconds));
}

void EpochTrend(const LabRuns& runs) {
  const int epochs[] = {50, 250, 500, 1000};
  std::vector<double> means, stds;
  for (int e : epochs) {
    std::vector<double> s;
    for (const auto& m : runs.models) s.push_back(Audit(m, e, 1, 100).report.DefaultScore());
    means.push_back(Mean(s));
    stds.push_back(SampleStd(s));
  }
  int inversions = 0;
  bool within = true;
  for (std::size_t i = 1; i < means.size(); ++i) {
    if (means[i] < means[i - 1]) {
      ++inversions;
      within = within && means[i - 1] - means[i] <= stds[i];
    }
  }
  Report("epoch-trend", inversions == 0 || (inversions == 1 && within),
         "mean score at epochs {50, 250, 500, 1000} " + List(means) + ", across-seed std " + List(stds));
}

void LayerDirection(const LabRuns& runs) {
  std::vector<double> l0, l1;
  for (const auto& m : runs.models) {
    l0.push_back(Audit(m, 500, 0, 100).report.DefaultScore());
    l1.push_back(Audit(m, 500, 1, 100).report.DefaultScore());
  }
  Report("layer-direction", Mean(l1) >= Mean(l0),
         "mean score layer 1 " + Fmt(Mean(l1)) + " vs layer 0 " + Fmt(Mean(l0)) + " at 500 epochs");
}

void KRobustness(const LabRuns& runs) {
  const std::size_t ks[] = {50, 100, 200};
  std::vector<double> means, stds;
  for (std::size_t k : ks) {
    std::vector<double> s;
    for (const auto& m : runs.models) s.push_back(Audit(m, 500, 1, k).report.DefaultScore());
    means.push_back(Mean(s));
    stds.push_back(SampleStd(s));
  }
  const double bound = 2.0 * Mean(stds);
  double worst = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = i + 1; j < means.size(); ++j) worst = std::max(worst, std::abs(means[i] - means[j]));
  }
  Report("k-robustness", worst < bound,
         "mean score at k {50, 100, 200} " + List(means) + ", largest pairwise difference " + Fmt(worst) +
             " vs 2 x mean across-seed std " + Fmt(bound));
}

void ProbeChecks() {
  std::mt19937_64 rng(1005);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int classes = inst == 0 ? 5 : 2 + inst % 6;
    const int dim = inst == 0 ? 8 : 1 + inst % 9;
    const int rows = 10 + 5 * inst;
    ProbeModel m;
    m.weights = Eigen::MatrixXd::NullaryExpr(classes, dim, [&] { return 0.5 * n(rng); });
    m.bias = Eigen::VectorXd::NullaryExpr(classes, [&] { return 0.5 * n(rng); });
    const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(rows, dim, [&] { return n(rng); });
    std::vector<int> y(static_cast<std::size_t>(rows));
    std::uniform_int_distribution<int> label(0, classes - 1);
    for (auto& v : y) v = label(rng);
    const double l2 = 1e-3 * (inst % 3);
    const auto g = ProbeLossAndGradient(m, x, y, l2);
    auto check = [&](double& param, double analytic) {
      const double h = 1e-5;
      const double saved = param;
      param = saved + h;
      const double up = ProbeLossAndGradient(m, x, y, l2).loss;
      param = saved - h;
      const double down = ProbeLossAndGradient(m, x, y, l2).loss;
      param = saved;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-3}));
    };
    for (Eigen::Index i = 0; i < m.weights.size(); ++i) check(m.weights.data()[i], g.weights.data()[i]);
    for (Eigen::Index i = 0; i < m.bias.size(); ++i) check(m.bias.data()[i], g.bias.data()[i]);
  }
  const auto train = testing::RandomSet(300, 8, 5, rng);
  const auto gap = ComputeProbeGap(TrainProbe(train, {}), train, train);
  Report("probe-gradient", worst <= 1e-4 && gap.gap == 0.0,
         "max relative gradient error " + Fmt(worst, 3) + " over 20 instances, gap with test = train " +
             Fmt(gap.gap));
}

int Run(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return status;
}

void SweepDeterminism(const std::string& cli) {
  const auto root = testing::ScratchDir("acceptance_cli");
  WriteTextFile(root / "lab.json",
                "{\"seed\": 5, \"scenes\": {\"public_per_class\": 100}, "
                "\"toy\": {\"epochs\": 40, \"checkpoints\": [20]}}\n");
  const std::string q = "\"";
  bool pass = Run(q + cli + q + " synth --config " + q + (root / "lab.json").string() + q + " --out " + q +
                  (root / "lab").string() + q) == 0;
  std::size_t compared = 0;
  std::size_t differing = 0;
  for (const char* axis : {"epochs", "k"}) {
    for (const char* run : {"one", "two"}) {
      pass = pass && Run(q + cli + q + " sweep --config " + q + (root / "lab" / "audit.json").string() + q +
                         " --axis " + axis + " --out " + q + (root / run).string() + q) == 0;
    }
    for (const std::string ext : {".csv", ".json"}) {
      const std::string name = std::string("sweep_") + axis + ext;
      if (!fs::exists(root / "one" / name) || !fs::exists(root / "two" / name)) {
        pass = false;
        continue;
      }
      ++compared;
      if (ReadTextFile(root / "one" / name) != ReadTextFile(root / "two" / name)) ++differing;
    }
  }
  Report("sweep-determinism", pass && compared == 4 && differing == 0,
         "two sweep invocations per axis (epochs, k): " + std::to_string(compared) + " CSV/JSON files compared, " +
             std::to_string(differing) + " differ");
}

}  // namespace
}  // namespace dejavu

int main(int argc, char** argv) {
  using namespace dejavu;
  if (argc < 2) {
    std::cerr << "usage: acceptance <path to dejavu-audit>\n";
    return 2;
  }
  try {
    KnnExactness();
    ConfidenceBounds();
    ScoreIdentities();
    CropOracle();
    const auto runs = TrainLabSeeds();
    PlantedRecovery(runs);
    EpochTrend(runs);
    LayerDirection(runs);
    KRobustness(runs);
    ProbeChecks();
    SweepDeterminism(argv[1]);
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
