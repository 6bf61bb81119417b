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

// Audit pipeline: ingest stores, decode crops by KNN against the public set,
// score, partition, probe, and write reports; plus the sweep harness.

#ifndef DEJAVU_AUDIT_HPP_
#define DEJAVU_AUDIT_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dejavu/embedding_store.hpp"
#include "dejavu/error.hpp"
#include "dejavu/knn.hpp"
#include "dejavu/lab_runner.hpp"
#include "dejavu/linear_probe.hpp"
#include "dejavu/metrics.hpp"
#include "dejavu/report.hpp"
#include "dejavu/split_protocol.hpp"
#include "json.hpp"

namespace dejavu {

enum class SweepAxis { kEpochs, kDatasetSize, kK, kLayer, kHyperparam };

inline const char* AxisName(SweepAxis a) {
  switch (a) {
    case SweepAxis::kEpochs: return "epochs";
    case SweepAxis::kDatasetSize: return "dataset_size";
    case SweepAxis::kK: return "k";
    case SweepAxis::kLayer: return "layer";
    case SweepAxis::kHyperparam: return "hyperparam";
  }
  return "?";
}

inline SweepAxis ParseAxis(const std::string& s) {
  for (auto a : {SweepAxis::kEpochs, SweepAxis::kDatasetSize, SweepAxis::kK, SweepAxis::kLayer,
                 SweepAxis::kHyperparam}) {
    if (s == AxisName(a)) return a;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown sweep axis '" + s + "'");
}

struct SweepSpec {
  // Empty lists are discovered from the store directory.
  std::vector<int> epochs;
  std::vector<int> layers;
  std::vector<std::size_t> k = {50, 100, 200};
  std::vector<double> dataset_size;
  std::vector<double> hyperparam;
};

struct AuditConfig {
  std::string store_dir = ".";
  std::string target_model = "A";
  std::string reference_model = "B";
  View query_view = View::kPeriphery;
  View public_view = View::kObject;
  int layer = -1;  // highest available when negative
  int epoch = -1;  // latest available when negative
  // Relative paths are looked up inside store_dir.
  std::string split_manifest;
  std::size_t k = 100;
  std::vector<double> percentiles = DefaultPercentiles();
  double p = kDefaultPercentile;
  bool normalize = false;
  bool role_swap = true;
  bool probe = true;
  ProbeConfig probe_config;
  std::string output_dir = "dejavu_out";
  std::uint64_t seed = 0;
  SweepSpec sweep;

  void Validate() const {
    if (k < 1) throw Error(ErrorCode::kInvalidConfig, "k must be >= 1");
    if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorCode::kInvalidConfig, "p must lie in (0, 100]");
    for (double q : percentiles) {
      if (!(q > 0.0 && q <= 100.0)) throw Error(ErrorCode::kInvalidConfig, "percentiles must lie in (0, 100]");
    }
    if (target_model.empty() || reference_model.empty() || target_model == reference_model) {
      throw Error(ErrorCode::kInvalidConfig, "target and reference models must be distinct and non-empty");
    }
    if (role_swap && split_manifest.empty()) {
      throw Error(ErrorCode::kInvalidConfig, "role_swap needs a split_manifest naming sets A and B");
    }
  }
};

// Effective configuration for provenance. The output directory is a
// destination, not an input, and is left out.
inline Json AuditConfigToJson(const AuditConfig& c) {
  Json j;
  j["store_dir"] = c.store_dir;
  j["target_model"] = c.target_model;
  j["reference_model"] = c.reference_model;
  j["query_view"] = std::string(ViewName(c.query_view));
  j["public_view"] = std::string(ViewName(c.public_view));
  j["layer"] = c.layer;
  j["epoch"] = c.epoch;
  j["split_manifest"] = c.split_manifest;
  j["k"] = c.k;
  j["percentiles"] = c.percentiles;
  j["p"] = c.p;
  j["normalize"] = c.normalize;
  j["role_swap"] = c.role_swap;
  j["probe"] = c.probe;
  j["probe_config"] = {{"epochs", c.probe_config.epochs},
                       {"step_size", c.probe_config.step_size},
                       {"l2", c.probe_config.l2},
                       {"batch_size", c.probe_config.batch_size}};
  j["seed"] = c.seed;
  j["sweep"] = {{"epochs", c.sweep.epochs},
                {"layers", c.sweep.layers},
                {"k", c.sweep.k},
                {"dataset_size", c.sweep.dataset_size},
                {"hyperparam", c.sweep.hyperparam}};
  return j;
}

inline AuditConfig AuditConfigFromJson(const Json& j) {
  using lab::runner_internal::Get;
  using lab::runner_internal::RejectUnknown;
  AuditConfig c;
  RejectUnknown(j, {"store_dir", "target_model", "reference_model", "query_view", "public_view", "layer", "epoch",
                    "split_manifest", "k", "percentiles", "p", "normalize", "role_swap", "probe", "probe_config",
                    "output_dir", "seed", "sweep"},
                "audit config");
  Get(j, "store_dir", c.store_dir);
  Get(j, "target_model", c.target_model);
  Get(j, "reference_model", c.reference_model);
  std::string qv(ViewName(c.query_view));
  std::string pv(ViewName(c.public_view));
  Get(j, "query_view", qv);
  Get(j, "public_view", pv);
  try {
    c.query_view = ParseView(qv);
    c.public_view = ParseView(pv);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidConfig, e.what());
  }
  Get(j, "layer", c.layer);
  Get(j, "epoch", c.epoch);
  Get(j, "split_manifest", c.split_manifest);
  Get(j, "k", c.k);
  Get(j, "percentiles", c.percentiles);
  Get(j, "p", c.p);
  Get(j, "normalize", c.normalize);
  Get(j, "role_swap", c.role_swap);
  Get(j, "probe", c.probe);
  if (j.contains("probe_config")) {
    const auto& pc = j.at("probe_config");
    RejectUnknown(pc, {"epochs", "step_size", "l2", "batch_size"}, "probe_config");
    Get(pc, "epochs", c.probe_config.epochs);
    Get(pc, "step_size", c.probe_config.step_size);
    Get(pc, "l2", c.probe_config.l2);
    Get(pc, "batch_size", c.probe_config.batch_size);
  }
  Get(j, "output_dir", c.output_dir);
  Get(j, "seed", c.seed);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    RejectUnknown(s, {"epochs", "layers", "k", "dataset_size", "hyperparam"}, "sweep");
    Get(s, "epochs", c.sweep.epochs);
    Get(s, "layers", c.sweep.layers);
    Get(s, "k", c.sweep.k);
    Get(s, "dataset_size", c.sweep.dataset_size);
    Get(s, "hyperparam", c.sweep.hyperparam);
  }
  return c;
}

inline AuditConfig LoadAuditConfig(const std::string& path) {
  Json j;
  try {
    j = Json::parse(ReadTextFile(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
  try {
    return AuditConfigFromJson(j);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

// (layer, epoch) pairs for which both query- and public-view stores of a model
// exist under the naming convention {model}_{view}_layer{L}_ep{E}.emb.
inline std::set<std::pair<int, int>> DiscoverStores(const std::string& dir, const std::string& model,
                                                    View query_view, View public_view) {
  namespace fs = std::filesystem;
  std::map<std::pair<int, int>, int> seen;
  if (!fs::is_directory(dir)) return {};
  const std::regex pattern("^(.+)_([a-z]+)_layer([0-9]+)_ep([0-9]+)\\.emb$");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern) || m[1] != model) continue;
    const std::pair<int, int> key{std::stoi(m[3]), std::stoi(m[4])};
    const std::string view = m[2].str();
    if (view == ViewName(query_view)) seen[key] |= 1;
    if (view == ViewName(public_view)) seen[key] |= 2;
  }
  std::set<std::pair<int, int>> out;
  for (const auto& [key, mask] : seen) {
    if (mask == 3) out.insert(key);
  }
  return out;
}

struct DirectionResult {
  std::string target;
  std::string reference;
  std::vector<InferenceRecord> target_records;
  std::vector<InferenceRecord> reference_records;
  DejaVuReport report;
};

struct AuditResult {
  AuditConfig config;  // with layer and epoch resolved
  std::vector<DirectionResult> directions;
  DejaVuReport report;
  std::vector<std::string> notes;
};

namespace audit_internal {

namespace fs = std::filesystem;

inline std::string InDir(const std::string& dir, const std::string& path) {
  return fs::path(path).is_absolute() ? path : (fs::path(dir) / path).string();
}

class StoreCache {
 public:
  explicit StoreCache(const AuditConfig& c) : c_(c) {}

  const EmbeddingSet& Get(const std::string& model, View view) {
    const std::string path = InDir(c_.store_dir, lab::StoreFileName(model, view, c_.layer, c_.epoch));
    auto it = cache_.find(path);
    if (it != cache_.end()) return it->second;
    if (!fs::exists(path)) {
      throw Error(ErrorCode::kMissingAxisInput, "missing " + std::string(ViewName(view)) + " store: " + path);
    }
    return cache_.emplace(path, ReadStore(path)).first->second;
  }

 private:
  const AuditConfig& c_;
  std::map<std::string, EmbeddingSet> cache_;
};

inline void ResolveCheckpoint(AuditConfig& c) {
  if (c.layer >= 0 && c.epoch >= 0) return;
  const auto found = DiscoverStores(c.store_dir, c.target_model, c.query_view, c.public_view);
  int best_layer = -1;
  int best_epoch = -1;
  for (const auto& [layer, epoch] : found) {
    if (c.layer >= 0 && layer != c.layer) continue;
    if (c.epoch >= 0 && epoch != c.epoch) continue;
    if (std::tie(layer, epoch) > std::tie(best_layer, best_epoch)) {
      best_layer = layer;
      best_epoch = epoch;
    }
  }
  if (best_layer < 0) {
    throw Error(ErrorCode::kMissingAxisInput,
                "no stores for model '" + c.target_model + "' under " + c.store_dir);
  }
  c.layer = best_layer;
  c.epoch = best_epoch;
}

inline std::vector<std::string> CommonIds(const EmbeddingSet& a, const EmbeddingSet& b) {
  return AlignPairs(a, b).common;
}

}  // namespace audit_internal

// Runs every configured direction in memory. Without a manifest the queries
// are the ids shared by both query-view stores and the index is the whole
// public-view store of each model.
inline AuditResult RunAuditInMemory(AuditConfig config, int threads = 0) {
  using namespace audit_internal;
  config.Validate();
  ResolveCheckpoint(config);
  std::optional<SplitPlan> plan;
  if (!config.split_manifest.empty()) {
    plan = ReadSplitManifestFile(InDir(config.store_dir, config.split_manifest));
  }
  StoreCache stores(config);
  AuditResult result;

  auto direction = [&](const std::string& target, const std::string& reference,
                       const std::vector<std::string>* query_ids) {
    const EmbeddingSet& tq = stores.Get(target, config.query_view);
    const EmbeddingSet& rq = stores.Get(reference, config.query_view);
    const EmbeddingSet& tp = stores.Get(target, config.public_view);
    const EmbeddingSet& rp = stores.Get(reference, config.public_view);
    const std::vector<std::string> ids = query_ids ? *query_ids : CommonIds(tq, rq);
    DirectionResult d;
    d.target = target;
    d.reference = reference;
    auto infer = [&](const EmbeddingSet& queries, const EmbeddingSet& pub) {
      const KnnIndex index = KnnIndex::Build(plan ? pub.Subset(plan->set_x) : pub, config.normalize);
      return Infer(index, queries.Subset(ids), config.k, threads);
    };
    d.target_records = infer(tq, tp);
    d.reference_records = infer(rq, rp);
    d.report = BuildReport(d.target_records, d.reference_records, config.percentiles,
                           {target, reference, config.k, plan ? plan->seed : config.seed, 1}, config.p);
    if (config.probe && plan && query_ids) {
      ProbeConfig pc = config.probe_config;
      pc.seed = config.seed;
      const EmbeddingSet train = tp.Subset(*query_ids);
      const EmbeddingSet test = tp.Subset(plan->set_x);
      const auto g = ComputeProbeGap(TrainProbe(train, pc), train, test);
      d.report.linear_probe = LinearProbeSummary{g.train_accuracy, g.test_accuracy, g.gap};
    }
    return d;
  };

  result.directions.push_back(
      direction(config.target_model, config.reference_model, plan ? &plan->set_a : nullptr));
  if (config.role_swap) {
    result.directions.push_back(direction(config.reference_model, config.target_model, &plan->set_b));
    result.report = RoleSwapAverage(result.directions[0].report, result.directions[1].report);
  } else {
    result.report = result.directions[0].report;
  }
  if (config.probe && !plan) result.notes.push_back("linear_probe skipped: no split manifest");
  result.config = std::move(config);
  return result;
}

inline Json AuditResultToJson(const AuditResult& r, const AuditConfig& requested) {
  Json j;
  j["config"] = AuditConfigToJson(requested);
  j["resolved"] = {{"layer", r.config.layer}, {"epoch", r.config.epoch}};
  j["report"] = ReportToJson(r.report);
  Json dirs = Json::array();
  for (const auto& d : r.directions) dirs.push_back(ReportToJson(d.report));
  j["directions"] = dirs;
  j["notes"] = r.notes;
  return j;
}

// Writes report.json, one records CSV per direction, and plots/ under
// config.output_dir.
inline AuditResult RunAudit(const AuditConfig& config, int threads = 0) {
  AuditResult r = RunAuditInMemory(config, threads);
  const std::filesystem::path out(config.output_dir);
  std::filesystem::create_directories(out);
  WriteTextFile(out / "report.json", AuditResultToJson(r, config).dump(2) + "\n");
  for (const auto& d : r.directions) {
    std::ostringstream csv;
    WriteRecordsCsv(csv, d.target_records, d.reference_records);
    WriteTextFile(out / ("records_" + d.target + "_vs_" + d.reference + ".csv"), csv.str());
  }
  RenderReport(r.report, out / "plots");
  return r;
}

// Metric rows for one audit: the default score, both top-p accuracies, the
// four partition shares and, when present, the probe figures.
inline std::vector<std::pair<std::string, double>> AuditMetrics(const DejaVuReport& r) {
  std::vector<std::pair<std::string, double>> m;
  const double p = r.p_default;
  m.emplace_back("dejavu_score", r.DefaultScore());
  m.emplace_back("target_accuracy", r.curve_target.AccuracyAt(p).value_or(0.0));
  m.emplace_back("reference_accuracy", r.curve_reference.AccuracyAt(p).value_or(0.0));
  for (int c = 0; c < 4; ++c) {
    m.emplace_back(std::string(CategoryName(static_cast<Category>(c))) + "_share",
                   r.partition_shares[static_cast<std::size_t>(c)]);
  }
  if (r.linear_probe) {
    m.emplace_back("probe_train_accuracy", r.linear_probe->train_accuracy);
    m.emplace_back("probe_test_accuracy", r.linear_probe->test_accuracy);
    m.emplace_back("probe_gap", r.linear_probe->gap);
  }
  std::sort(m.begin(), m.end());
  return m;
}

struct SweepResult {
  SweepAxis axis = SweepAxis::kK;
  std::vector<double> values;
  std::vector<SweepRow> rows;
  // One message per axis value whose inputs were missing or failed.
  std::vector<std::string> missing;
  bool complete() const { return missing.empty(); }
};

inline std::vector<double> SweepValues(const AuditConfig& c, SweepAxis axis) {
  namespace fs = std::filesystem;
  std::set<double> out;
  switch (axis) {
    case SweepAxis::kK:
      for (auto k : c.sweep.k) out.insert(static_cast<double>(k));
      break;
    case SweepAxis::kEpochs:
    case SweepAxis::kLayer: {
      const auto& given = axis == SweepAxis::kEpochs ? c.sweep.epochs : c.sweep.layers;
      if (!given.empty()) {
        for (int v : given) out.insert(v);
        break;
      }
      for (const auto& [layer, epoch] : DiscoverStores(c.store_dir, c.target_model, c.query_view, c.public_view)) {
        if (axis == SweepAxis::kEpochs && (c.layer < 0 || layer == c.layer)) out.insert(epoch);
        if (axis == SweepAxis::kLayer && (c.epoch < 0 || epoch == c.epoch)) out.insert(layer);
      }
      break;
    }
    case SweepAxis::kDatasetSize:
    case SweepAxis::kHyperparam: {
      const auto& given = axis == SweepAxis::kDatasetSize ? c.sweep.dataset_size : c.sweep.hyperparam;
      if (!given.empty()) {
        out.insert(given.begin(), given.end());
        break;
      }
      const std::string prefix = std::string(AxisName(axis)) + "_";
      if (!fs::is_directory(c.store_dir)) break;
      for (const auto& e : fs::directory_iterator(c.store_dir)) {
        const std::string name = e.path().filename().string();
        if (!e.is_directory() || name.rfind(prefix, 0) != 0) continue;
        char* end = nullptr;
        const std::string tail = name.substr(prefix.size());
        const double v = std::strtod(tail.c_str(), &end);
        if (end && *end == '\0' && !tail.empty()) out.insert(v);
      }
      break;
    }
  }
  return {out.begin(), out.end()};
}

inline AuditConfig SweepCell(const AuditConfig& base, SweepAxis axis, double value) {
  AuditConfig c = base;
  switch (axis) {
    case SweepAxis::kK: c.k = static_cast<std::size_t>(value); break;
    case SweepAxis::kEpochs: c.epoch = static_cast<int>(value); break;
    case SweepAxis::kLayer: c.layer = static_cast<int>(value); break;
    case SweepAxis::kDatasetSize:
    case SweepAxis::kHyperparam:
      c.store_dir = (std::filesystem::path(base.store_dir) / (std::string(AxisName(axis)) + "_" + FormatNumber(value)))
                        .string();
      break;
  }
  // The cell is pinned on the swept axis; the other axis keeps the base
  // setting or falls back to discovery.
  if (axis == SweepAxis::kEpochs && c.layer < 0) {
    int best = -1;
    for (const auto& [layer, epoch] : DiscoverStores(c.store_dir, c.target_model, c.query_view, c.public_view)) {
      if (epoch == c.epoch) best = std::max(best, layer);
    }
    c.layer = best < 0 ? 0 : best;
  }
  return c;
}

// One audit per axis value, cells in parallel. Rows are ordered by value,
// then metric name.
inline SweepResult RunSweepInMemory(const AuditConfig& config, SweepAxis axis, int threads = 0) {
  config.Validate();
  SweepResult result;
  result.axis = axis;
  result.values = SweepValues(config, axis);
  if (result.values.empty()) {
    throw Error(ErrorCode::kMissingAxisInput, std::string("no values for axis ") + AxisName(axis));
  }
  const std::size_t n = result.values.size();
  std::vector<std::optional<DejaVuReport>> reports(n);
  std::vector<std::string> errors(n);
  const int workers = threads > 0 ? threads : DefaultThreadCount();
  ParallelFor(n, workers, [&](std::size_t i) {
    try {
      reports[i] = RunAuditInMemory(SweepCell(config, axis, result.values[i]), 1).report;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!reports[i]) {
      result.missing.push_back(std::string(AxisName(axis)) + "=" + FormatNumber(result.values[i]) + ": " +
                               errors[i]);
      continue;
    }
    for (const auto& [metric, v] : AuditMetrics(*reports[i])) {
      result.rows.push_back({AxisName(axis), result.values[i], metric, v});
    }
  }
  return result;
}

// Writes sweep_{axis}.csv, sweep_{axis}.json and the sweep plot into
// config.output_dir.
inline SweepResult RunSweep(const AuditConfig& config, SweepAxis axis, int threads = 0) {
  SweepResult r = RunSweepInMemory(config, axis, threads);
  const std::filesystem::path out(config.output_dir);
  std::filesystem::create_directories(out);
  const std::string stem = std::string("sweep_") + AxisName(axis);
  std::ostringstream csv;
  WriteSweepCsv(csv, r.rows);
  WriteTextFile(out / (stem + ".csv"), csv.str());
  Json j;
  j["config"] = AuditConfigToJson(config);
  j["axis"] = AxisName(axis);
  j["values"] = r.values;
  j["complete"] = r.complete();
  j["missing"] = r.missing;
  WriteTextFile(out / (stem + ".json"), j.dump(2) + "\n");
  RenderSweep(AxisName(axis), r.rows, out);
  return r;
}

}  // namespace dejavu

#endif  // DEJAVU_AUDIT_HPP_
