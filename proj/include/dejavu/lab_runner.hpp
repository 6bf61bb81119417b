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

// End-to-end synthetic lab: config file, concurrent training of the target
// and reference encoders, in-memory audit, and on-disk export in the store and
// manifest formats consumed by the audit pipeline.

#ifndef DEJAVU_LAB_RUNNER_HPP_
#define DEJAVU_LAB_RUNNER_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dejavu/embedding_store.hpp"
#include "dejavu/error.hpp"
#include "dejavu/knn.hpp"
#include "dejavu/linear_probe.hpp"
#include "dejavu/metrics.hpp"
#include "dejavu/report.hpp"
#include "dejavu/split_protocol.hpp"
#include "dejavu/synthetic_lab.hpp"
#include "json.hpp"

namespace dejavu::lab {

// SplitMix64 step; distinct streams from the single config seed.
inline std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct HyperparamVariant {
  std::string name = "lambda";
  std::vector<double> values;
};

struct LabConfig {
  std::uint64_t seed = 0;
  SceneConfig scenes;
  ToyConfig toy;
  std::vector<int> layers = {0, 1};
  View public_view = View::kObject;
  std::vector<int> dataset_size_variants;
  std::optional<HyperparamVariant> hyperparam_variant;
  // When set, synth also writes classification-head fine-tunes of the final
  // checkpoints under finetune/, with store epochs counting fine-tune epochs.
  std::optional<FineTuneConfig> finetune;

  LabConfig() { toy.checkpoints = {50, 250, 500}; }
};

inline const char* LossName(LossKind k) { return k == LossKind::kInfoNce ? "infonce" : "vicreg-like"; }

inline LossKind ParseLoss(const std::string& s) {
  if (s == "infonce") return LossKind::kInfoNce;
  if (s == "vicreg-like") return LossKind::kVicRegLike;
  throw Error(ErrorCode::kInvalidConfig, "unknown loss '" + s + "'");
}

namespace runner_internal {

inline void RejectUnknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw Error(ErrorCode::kInvalidConfig, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void Get(const Json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidConfig, std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace runner_internal

inline Json LabConfigToJson(const LabConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["scenes"] = {{"num_classes", c.scenes.num_classes},
                 {"scenes_per_class", c.scenes.scenes_per_class},
                 {"public_per_class", c.scenes.public_per_class},
                 {"background_dim", c.scenes.background_dim},
                 {"object_dim", c.scenes.object_dim},
                 {"correlation", c.scenes.correlation},
                 {"background_jitter", c.scenes.background_jitter},
                 {"object_jitter", c.scenes.object_jitter}};
  j["toy"] = {{"embed_dim", c.toy.embed_dim},
              {"width", c.toy.width},
              {"epochs", c.toy.epochs},
              {"batch_size", c.toy.batch_size},
              {"learning_rate", c.toy.learning_rate},
              {"temperature", c.toy.temperature},
              {"loss", LossName(c.toy.loss)},
              {"lambda", c.toy.lambda},
              {"mu", c.toy.mu},
              {"nu", c.toy.nu},
              {"view_noise", c.toy.view_noise},
              {"checkpoints", c.toy.checkpoints}};
  j["layers"] = c.layers;
  j["public_view"] = std::string(ViewName(c.public_view));
  Json variants = Json::object();
  if (!c.dataset_size_variants.empty()) variants["dataset_size"] = c.dataset_size_variants;
  if (c.hyperparam_variant) {
    variants["hyperparam"] = {{"name", c.hyperparam_variant->name}, {"values", c.hyperparam_variant->values}};
  }
  j["variants"] = variants;
  if (c.finetune) {
    j["finetune"] = {{"epochs", c.finetune->epochs},
                     {"batch_size", c.finetune->batch_size},
                     {"learning_rate", c.finetune->learning_rate},
                     {"view_noise", c.finetune->view_noise},
                     {"checkpoints", c.finetune->checkpoints}};
  }
  return j;
}

inline LabConfig LabConfigFromJson(const Json& j) {
  using runner_internal::Get;
  using runner_internal::RejectUnknown;
  LabConfig c;
  RejectUnknown(j, {"seed", "scenes", "toy", "layers", "public_view", "variants", "finetune"}, "lab config");
  Get(j, "seed", c.seed);
  if (j.contains("scenes")) {
    const auto& s = j.at("scenes");
    RejectUnknown(s, {"num_classes", "scenes_per_class", "public_per_class", "background_dim", "object_dim",
                      "correlation", "background_jitter", "object_jitter"},
                  "scenes");
    Get(s, "num_classes", c.scenes.num_classes);
    Get(s, "scenes_per_class", c.scenes.scenes_per_class);
    Get(s, "public_per_class", c.scenes.public_per_class);
    Get(s, "background_dim", c.scenes.background_dim);
    Get(s, "object_dim", c.scenes.object_dim);
    Get(s, "correlation", c.scenes.correlation);
    Get(s, "background_jitter", c.scenes.background_jitter);
    Get(s, "object_jitter", c.scenes.object_jitter);
  }
  if (j.contains("toy")) {
    const auto& t = j.at("toy");
    RejectUnknown(t, {"embed_dim", "width", "epochs", "batch_size", "learning_rate", "temperature", "loss",
                      "lambda", "mu", "nu", "view_noise", "checkpoints"},
                  "toy");
    Get(t, "embed_dim", c.toy.embed_dim);
    Get(t, "width", c.toy.width);
    Get(t, "epochs", c.toy.epochs);
    Get(t, "batch_size", c.toy.batch_size);
    Get(t, "learning_rate", c.toy.learning_rate);
    Get(t, "temperature", c.toy.temperature);
    std::string loss = LossName(c.toy.loss);
    Get(t, "loss", loss);
    c.toy.loss = ParseLoss(loss);
    Get(t, "lambda", c.toy.lambda);
    Get(t, "mu", c.toy.mu);
    Get(t, "nu", c.toy.nu);
    Get(t, "view_noise", c.toy.view_noise);
    Get(t, "checkpoints", c.toy.checkpoints);
  }
  Get(j, "layers", c.layers);
  std::string view = std::string(ViewName(c.public_view));
  Get(j, "public_view", view);
  try {
    c.public_view = ParseView(view);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidConfig, e.what());
  }
  if (j.contains("variants")) {
    const auto& v = j.at("variants");
    RejectUnknown(v, {"dataset_size", "hyperparam"}, "variants");
    Get(v, "dataset_size", c.dataset_size_variants);
    if (v.contains("hyperparam")) {
      const auto& h = v.at("hyperparam");
      RejectUnknown(h, {"name", "values"}, "variants.hyperparam");
      HyperparamVariant hv;
      Get(h, "name", hv.name);
      Get(h, "values", hv.values);
      c.hyperparam_variant = hv;
    }
  }
  if (j.contains("finetune")) {
    const auto& f = j.at("finetune");
    RejectUnknown(f, {"epochs", "batch_size", "learning_rate", "view_noise", "checkpoints"}, "finetune");
    FineTuneConfig ft;
    Get(f, "epochs", ft.epochs);
    Get(f, "batch_size", ft.batch_size);
    Get(f, "learning_rate", ft.learning_rate);
    Get(f, "view_noise", ft.view_noise);
    Get(f, "checkpoints", ft.checkpoints);
    if (ft.epochs < 0 || ft.batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "invalid finetune epochs or batch_size");
    c.finetune = ft;
  }
  for (int l : c.layers) {
    if (l != 0 && l != 1) throw Error(ErrorCode::kInvalidConfig, "toy layers are 0 and 1");
  }
  if (c.public_view == View::kCorner) {
    throw Error(ErrorCode::kInvalidConfig, "public_view must be background, object or full");
  }
  c.scenes.Validate();
  return c;
}

// Applies a named hyperparameter override.
inline void SetHyperparam(ToyConfig& toy, const std::string& name, double value) {
  if (name == "lambda") toy.lambda = value;
  else if (name == "mu") toy.mu = value;
  else if (name == "nu") toy.nu = value;
  else if (name == "temperature") toy.temperature = value;
  else if (name == "learning_rate") toy.learning_rate = value;
  else if (name == "width") toy.width = static_cast<int>(value);
  else throw Error(ErrorCode::kInvalidConfig, "unknown hyperparameter '" + name + "'");
}

struct LabModels {
  LabConfig config;
  SceneSplit split;
  ToyEncoder target;
  ToyEncoder reference;
};

// Generates scenes and trains the target (on A) and reference (on B)
// encoders on two threads.
inline LabModels TrainLab(const LabConfig& config) {
  LabModels m;
  m.config = config;
  SceneConfig sc = config.scenes;
  sc.seed = DeriveSeed(config.seed, 0);
  m.split = GenerateScenes(sc);
  ToyConfig ta = config.toy;
  ToyConfig tb = config.toy;
  ta.seed = DeriveSeed(config.seed, 1);
  tb.seed = DeriveSeed(config.seed, 2);
  std::exception_ptr err_a;
  std::exception_ptr err_b;
  {
    std::jthread worker([&] {
      try {
        m.reference = TrainToy(m.split.train_b, tb);
      } catch (...) {
        err_b = std::current_exception();
      }
    });
    try {
      m.target = TrainToy(m.split.train_a, ta);
    } catch (...) {
      err_a = std::current_exception();
    }
  }
  if (err_a) std::rethrow_exception(err_a);
  if (err_b) std::rethrow_exception(err_b);
  return m;
}

struct LabAuditOptions {
  int epoch = -1;  // final epoch when negative
  int layer = 1;
  std::size_t k = 100;
  double p = kDefaultPercentile;
  std::vector<double> percentiles = DefaultPercentiles();
  bool role_swap = false;
  bool probe = false;
  ProbeConfig probe_config;
  int threads = 0;
};

struct LabAudit {
  std::vector<InferenceRecord> target_records;
  std::vector<InferenceRecord> reference_records;
  DejaVuReport report;
};

namespace runner_internal {

inline std::vector<Scene> Concat(const std::vector<Scene>& a, const std::vector<Scene>& b) {
  std::vector<Scene> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline LabAudit AuditDirection(const LabModels& m, const ToyEncoder& target, const ToyEncoder& reference,
                               const std::vector<Scene>& queries, const std::string& target_tag,
                               const std::string& reference_tag, const LabAuditOptions& o) {
  const int epoch = o.epoch < 0 ? target.checkpoints.back().epoch : o.epoch;
  const SceneView pub = FromStoreView(m.config.public_view);
  const auto& wt = target.At(epoch);
  const auto& wr = reference.At(epoch);
  LabAudit out;
  {
    const KnnIndex it = KnnIndex::Build(EmbedViews(wt, m.split.public_set, pub, o.layer), false);
    out.target_records = Infer(it, EmbedViews(wt, queries, SceneView::kBackground, o.layer), o.k, o.threads);
  }
  {
    const KnnIndex ir = KnnIndex::Build(EmbedViews(wr, m.split.public_set, pub, o.layer), false);
    out.reference_records =
        Infer(ir, EmbedViews(wr, queries, SceneView::kBackground, o.layer), o.k, o.threads);
  }
  ReportMetadata meta{target_tag, reference_tag, o.k, m.config.seed, 1};
  out.report = BuildReport(out.target_records, out.reference_records, o.percentiles, meta, o.p);
  if (o.probe) {
    ProbeConfig pc = o.probe_config;
    pc.seed = m.config.seed;
    const auto train = EmbedViews(wt, queries, pub, o.layer);
    const auto test = EmbedViews(wt, m.split.public_set, pub, o.layer);
    const auto g = ComputeProbeGap(TrainProbe(train, pc), train, test);
    out.report.linear_probe = LinearProbeSummary{g.train_accuracy, g.test_accuracy, g.gap};
  }
  return out;
}

}  // namespace runner_internal

struct FineTunedLab {
  // Target and reference replaced by their fine-tuned encoders; checkpoints
  // are fine-tune epochs.
  LabModels models;
  std::vector<double> target_accuracy;
  std::vector<double> reference_accuracy;
};

// Fine-tunes the final checkpoint of both lab encoders, each on its own
// training scenes, and evaluates the heads on the public scenes.
inline FineTunedLab FineTuneLab(const LabModels& m, FineTuneConfig config) {
  FineTunedLab out;
  out.models.config = m.config;
  out.models.split = m.split;
  FineTuneConfig ca = config;
  FineTuneConfig cb = config;
  ca.seed = DeriveSeed(m.config.seed, 3);
  cb.seed = DeriveSeed(m.config.seed, 4);
  auto a = FineTuneToy(m.target.Final(), m.split.train_a, m.split.num_classes, ca, m.split.public_set);
  auto b = FineTuneToy(m.reference.Final(), m.split.train_b, m.split.num_classes, cb, m.split.public_set);
  out.models.target = std::move(a.encoder);
  out.models.reference = std::move(b.encoder);
  out.target_accuracy = std::move(a.eval_accuracy);
  out.reference_accuracy = std::move(b.eval_accuracy);
  return out;
}

// Audit of trained lab encoders without touching disk: target model A on its
// own training scenes, reference model B; with role_swap the B-on-B direction
// is averaged in.
inline LabAudit AuditLab(const LabModels& m, const LabAuditOptions& o) {
  LabAudit ab = runner_internal::AuditDirection(m, m.target, m.reference, m.split.train_a, "A", "B", o);
  if (!o.role_swap) return ab;
  LabAudit ba = runner_internal::AuditDirection(m, m.reference, m.target, m.split.train_b, "B", "A", o);
  ab.report = RoleSwapAverage(ab.report, ba.report);
  return ab;
}

inline std::string StoreFileName(const std::string& model, View view, int layer, int epoch) {
  return model + "_" + std::string(ViewName(view)) + "_layer" + std::to_string(layer) + "_ep" +
         std::to_string(epoch) + ".emb";
}

inline const char* SetName(SceneSet s) {
  switch (s) {
    case SceneSet::kTarget: return "A";
    case SceneSet::kReference: return "B";
    case SceneSet::kPublic: return "X";
  }
  return "?";
}

inline std::string ScenesJsonl(const SceneSplit& split) {
  std::ostringstream out;
  for (const auto* set : {&split.train_a, &split.train_b, &split.public_set}) {
    for (const auto& s : *set) {
      Json j{{"id", s.id},
             {"set", SetName(s.set)},
             {"label", s.label},
             {"background", std::vector<double>(s.background.data(), s.background.data() + s.background.size())},
             {"object", std::vector<double>(s.object.data(), s.object.data() + s.object.size())}};
      out << j.dump() << '\n';
    }
  }
  return out.str();
}

inline std::string OracleJsonl(const SceneSplit& split) {
  std::ostringstream out;
  for (const auto& e : split.ledger) {
    Json j{{"id", e.id},
           {"set", SetName(e.set)},
           {"label", e.label},
           {"background", e.correlated_background ? "correlated" : "unique"}};
    out << j.dump() << '\n';
  }
  return out.str();
}

inline SplitPlan LabSplitPlan(const SceneSplit& split, std::uint64_t seed) {
  SplitPlan plan;
  plan.seed = seed;
  for (const auto& s : split.train_a) plan.set_a.push_back(s.id);
  for (const auto& s : split.train_b) plan.set_b.push_back(s.id);
  for (const auto& s : split.public_set) plan.set_x.push_back(s.id);
  for (const auto& e : split.ledger) plan.label_of[e.id] = e.label;
  plan.sizes = {plan.set_a.size(), plan.set_b.size(), plan.set_x.size(), std::nullopt};
  return plan;
}

// Writes scenes.jsonl, oracle.jsonl, split.tsv, training.json, lab.json and
// one store per (model, view, layer, checkpoint) into dir. The query view
// store holds A and B scenes; the public view store holds A, B and X scenes.
inline void WriteLabOutputs(const LabModels& m, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  WriteTextFile(dir / "scenes.jsonl", ScenesJsonl(m.split));
  WriteTextFile(dir / "oracle.jsonl", OracleJsonl(m.split));
  {
    std::ostringstream manifest;
    WriteSplitManifest(LabSplitPlan(m.split, m.config.seed), manifest);
    WriteTextFile(dir / "split.tsv", manifest.str());
  }
  Json training{{"config", LabConfigToJson(m.config)},
                {"loss_history", {{"A", m.target.loss_history}, {"B", m.reference.loss_history}}}};
  WriteTextFile(dir / "training.json", training.dump(2) + "\n");
  const auto queries = runner_internal::Concat(m.split.train_a, m.split.train_b);
  const auto everything = runner_internal::Concat(queries, m.split.public_set);
  const SceneView pub = FromStoreView(m.config.public_view);
  for (const auto& [tag, enc] : {std::pair<std::string, const ToyEncoder*>{"A", &m.target},
                                 std::pair<std::string, const ToyEncoder*>{"B", &m.reference}}) {
    for (const auto& ck : enc->checkpoints) {
      for (int layer : m.config.layers) {
        Provenance meta{tag, layer, ck.epoch, View::kPeriphery,
                        "synthetic-lab seed=" + std::to_string(m.config.seed)};
        WriteStore(EmbedViews(ck.weights, queries, SceneView::kBackground, layer, meta),
                   (dir / StoreFileName(tag, View::kPeriphery, layer, ck.epoch)).string());
        WriteStore(EmbedViews(ck.weights, everything, pub, layer, meta),
                   (dir / StoreFileName(tag, m.config.public_view, layer, ck.epoch)).string());
      }
    }
  }
}

// Trains and writes the base lab plus one subdirectory per variant,
// named dataset_size_{v} and hyperparam_{v}, and finetune/ when configured.
inline void RunSynth(const LabConfig& config, const std::filesystem::path& dir) {
  LabConfig base = config;
  base.dataset_size_variants.clear();
  base.hyperparam_variant.reset();
  base.finetune.reset();
  const LabModels models = TrainLab(base);
  WriteLabOutputs(models, dir);
  WriteTextFile(dir / "lab.json", LabConfigToJson(config).dump(2) + "\n");
  if (config.finetune) {
    const FineTunedLab ft = FineTuneLab(models, *config.finetune);
    WriteLabOutputs(ft.models, dir / "finetune");
    Json acc = Json::array();
    for (std::size_t i = 0; i < ft.models.target.checkpoints.size(); ++i) {
      acc.push_back({{"epoch", ft.models.target.checkpoints[i].epoch},
                     {"A", ft.target_accuracy[i]},
                     {"B", ft.reference_accuracy[i]}});
    }
    WriteTextFile(dir / "finetune" / "head_accuracy.json", acc.dump(2) + "\n");
  }
  for (int n : config.dataset_size_variants) {
    LabConfig v = base;
    v.scenes.scenes_per_class = n;
    WriteLabOutputs(TrainLab(v), dir / ("dataset_size_" + std::to_string(n)));
  }
  if (config.hyperparam_variant) {
    for (double value : config.hyperparam_variant->values) {
      LabConfig v = base;
      SetHyperparam(v.toy, config.hyperparam_variant->name, value);
      WriteLabOutputs(TrainLab(v), dir / ("hyperparam_" + FormatNumber(value)));
    }
  }
}

}  // namespace dejavu::lab

#endif  // DEJAVU_LAB_RUNNER_HPP_
