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

// Command-line front end: split, crop, synth, audit, sweep, probe, report.
//
// Exit codes: 0 success, 1 module error, 2 usage error, 3 sweep with
// missing axis inputs (partial results written).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dejavu/dejavu.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dejavu;

struct Overrides {
  std::optional<std::size_t> k;
  std::optional<double> p;
  std::optional<std::uint64_t> seed;
  bool normalize = false;
  std::string out;
  std::string store_dir;
};

void AddOverrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--k", o.k, "Neighbors per query")->check(CLI::PositiveNumber);
  cmd->add_option("--p", o.p, "Default percentile")->check(CLI::Range(0.0, 100.0));
  cmd->add_option("--seed", o.seed, "Config seed");
  cmd->add_flag("--normalize", o.normalize, "L2-normalize rows before search");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--store-dir", o.store_dir, "Store directory");
}

AuditConfig LoadWithOverrides(const std::string& path, const Overrides& o) {
  AuditConfig c = LoadAuditConfig(path);
  const fs::path base = fs::path(path).parent_path();
  if (!o.store_dir.empty()) c.store_dir = o.store_dir;
  else if (fs::path(c.store_dir).is_relative()) c.store_dir = (base / c.store_dir).lexically_normal().string();
  if (o.k) c.k = *o.k;
  if (o.p) c.p = *o.p;
  if (o.seed) c.seed = *o.seed;
  if (o.normalize) c.normalize = true;
  if (!o.out.empty()) c.output_dir = o.out;
  return c;
}

int RunSplit(const std::string& catalog_path, const std::string& sizes_text,
             std::optional<std::size_t> augment_to, std::uint64_t seed, const std::string& out) {
  const auto parts = text_io::SplitOn(sizes_text, ',');
  if (parts.size() != 3) throw Error(ErrorCode::kInvalidArgument, "--sizes expects A,B,X");
  SplitSizes sizes{text_io::ParseSize(parts[0], "--sizes"), text_io::ParseSize(parts[1], "--sizes"),
                   text_io::ParseSize(parts[2], "--sizes"), augment_to};
  const auto catalog = ReadCatalogFile(catalog_path);
  const auto plan = PlanSplits(catalog, sizes, seed);
  const auto violations = VerifyPlan(plan, catalog);
  for (const auto& v : violations) std::cerr << ViolationKindName(v.kind) << ": " << v.detail << "\n";
  if (out.empty()) {
    WriteSplitManifest(plan, std::cout);
  } else {
    std::ofstream f(out);
    WriteSplitManifest(plan, f);
    if (!f) throw Error(ErrorCode::kIoFailure, "cannot write " + out);
  }
  std::cerr << "A=" << plan.set_a.size() << " B=" << plan.set_b.size() << " X=" << plan.set_x.size()
            << " C=" << plan.set_c.size() << "\n";
  return violations.empty() ? 0 : 1;
}

int RunCrop(const std::string& boxes_path, bool square, int min_side,
            const std::optional<std::string>& corner_fraction, const std::string& out) {
  const auto records = ReadBoxManifestFile(boxes_path);
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw Error(ErrorCode::kIoFailure, "cannot write " + out);
  }
  std::ostream& sink = out.empty() ? std::cout : file;
  std::size_t skipped = 0;
  for (const auto& rec : records) {
    try {
      if (corner_fraction) {
        WriteCropLine(sink, rec.id, rec.width, rec.height,
                      CornerCrop(rec.width, rec.height, ParseFraction(*corner_fraction)));
        continue;
      }
      const auto crop = PeripheryCrop(rec.width, rec.height, rec.boxes, min_side,
                                      square ? CropShape::kSquare : CropShape::kRectangle);
      if (crop) {
        WriteCropLine(sink, rec.id, rec.width, rec.height, *crop);
      } else {
        ++skipped;
      }
    } catch (const Error& e) {
      throw Error(e.code(), "example '" + rec.id + "': " + e.what());
    }
  }
  std::cerr << records.size() - skipped << " crops written, " << skipped << " examples without a qualifying crop\n";
  return 0;
}

int RunProbe(const std::string& train_path, const std::string& test_path, ProbeConfig pc,
             const std::string& out) {
  const auto train = ReadStore(train_path);
  const auto test = ReadStore(test_path);
  const auto model = TrainProbe(train, pc);
  const auto g = ComputeProbeGap(model, train, test);
  Json j{{"train_accuracy", g.train_accuracy},
         {"test_accuracy", g.test_accuracy},
         {"gap", g.gap},
         {"initial_loss", model.initial_loss},
         {"final_loss", model.final_loss}};
  if (out.empty()) std::cout << j.dump(2) << "\n";
  else WriteTextFile(out, j.dump(2) + "\n");
  return 0;
}

int RunReport(const std::string& in, const std::string& out) {
  Json j;
  try {
    j = Json::parse(ReadTextFile(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, in + ": " + e.what());
  }
  const auto report = ReportFromJson(j.contains("report") ? j.at("report") : j);
  const auto r = RenderReport(report, out);
  for (const auto& note : r.notes) std::cerr << "note: " << note << "\n";
  std::cerr << r.figures.size() << " figures written to " << out << "\n";
  return 0;
}

int RunValidate(const std::vector<std::string>& stores, const std::string& crops, const std::string& split) {
  std::vector<std::string> ids;
  if (!crops.empty()) {
    for (const auto& rec : ReadBoxManifestFile(crops)) ids.push_back(rec.id);
  }
  std::optional<SplitPlan> plan;
  if (!split.empty()) plan = ReadSplitManifestFile(split);
  int failed = 0;
  for (const auto& path : stores) {
    const auto check = ValidateStoreFile(path, crops.empty() ? nullptr : &ids, plan ? &*plan : nullptr);
    std::cout << (check.ok ? "ok   " : "FAIL ") << path << ": " << check.message << "\n";
    failed += check.ok ? 0 : 1;
  }
  return failed ? 4 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-model memorization audit for representation models"};
  app.require_subcommand(1);

  std::string catalog, sizes, split_out;
  std::optional<std::size_t> augment_to;
  std::uint64_t split_seed = 0;
  auto* split = app.add_subcommand("split", "Plan the target/reference/public/auxiliary split");
  split->add_option("--catalog", catalog, "Catalog: id<TAB>class<TAB>has_bbox")->required();
  split->add_option("--sizes", sizes, "Set sizes A,B,X")->required();
  split->add_option("--augment-to", augment_to, "Per-model training size after augmenting from C");
  split->add_option("--seed", split_seed, "Split seed");
  split->add_option("--out", split_out, "Manifest path (stdout when omitted)");

  std::string boxes, crop_out;
  bool square = false;
  int min_side = 1;
  std::optional<std::string> corner_fraction;
  auto* crop = app.add_subcommand("crop", "Compute periphery or corner crops");
  crop->add_option("--boxes", boxes, "Box manifest: id<TAB>w<TAB>h<TAB>x0,y0,x1,y1;...")->required();
  crop->add_flag("--square", square, "Largest square instead of largest rectangle");
  crop->add_option("--min-side", min_side, "Drop crops with a shorter side")->check(CLI::PositiveNumber);
  crop->add_option("--corner-fraction", corner_fraction, "Lower-left corner crop of this fraction (a/b or decimal)");
  crop->add_option("--out", crop_out, "Crop manifest path (stdout when omitted)");

  std::string lab_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "Generate and train the synthetic lab, export stores");
  synth->add_option("--config", lab_config, "Lab config JSON (defaults when omitted)");
  synth->add_option("--seed", synth_seed, "Lab seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  std::string audit_config;
  Overrides audit_over;
  auto* audit = app.add_subcommand("audit", "Run the audit described by a config file");
  audit->add_option("--config", audit_config, "Audit config JSON")->required();
  AddOverrides(audit, audit_over);

  std::string sweep_config, axis;
  Overrides sweep_over;
  auto* sweep = app.add_subcommand("sweep", "Run one audit per value of a sweep axis");
  sweep->add_option("--config", sweep_config, "Audit config JSON")->required();
  sweep->add_option("--axis", axis, "epochs | dataset_size | k | layer | hyperparam")->required();
  AddOverrides(sweep, sweep_over);

  std::string probe_train, probe_test, probe_out;
  ProbeConfig probe_config;
  auto* probe = app.add_subcommand("probe", "Train a linear probe and report its train-test gap");
  probe->add_option("--train", probe_train, "Training store")->required();
  probe->add_option("--test", probe_test, "Test store")->required();
  probe->add_option("--epochs", probe_config.epochs, "Epochs");
  probe->add_option("--step-size", probe_config.step_size, "Initial step size");
  probe->add_option("--l2", probe_config.l2, "L2 coefficient");
  probe->add_option("--batch-size", probe_config.batch_size, "Batch size");
  probe->add_option("--seed", probe_config.seed, "Seed");
  probe->add_option("--out", probe_out, "JSON output path (stdout when omitted)");

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "Render plots and an HTML index from a report JSON");
  report->add_option("--in", report_in, "report.json")->required();
  report->add_option("--out", report_out, "Output directory")->required();

  std::vector<std::string> validate_stores;
  std::string validate_crops, validate_split;
  auto* validate = app.add_subcommand("validate", "Check store files written by an external extractor");
  validate->add_option("--store", validate_stores, "Store file(s)")->required();
  validate->add_option("--crops", validate_crops, "Crop manifest the store ids must match");
  validate->add_option("--split", validate_split, "Split manifest every store id must appear in");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*split) return RunSplit(catalog, sizes, augment_to, split_seed, split_out);
    if (*crop) return RunCrop(boxes, square, min_side, corner_fraction, crop_out);
    if (*synth) {
      lab::LabConfig c;
      if (!lab_config.empty()) {
        try {
          c = lab::LabConfigFromJson(Json::parse(ReadTextFile(lab_config)));
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorCode::kParseError, lab_config + ": " + e.what());
        }
      }
      if (synth_seed) c.seed = *synth_seed;
      lab::RunSynth(c, synth_out);
      AuditConfig a;
      a.store_dir = ".";
      a.split_manifest = "split.tsv";
      a.public_view = c.public_view;
      a.seed = c.seed;
      WriteTextFile(fs::path(synth_out) / "audit.json", AuditConfigToJson(a).dump(2) + "\n");
      std::cerr << "lab written to " << synth_out << "\n";
      return 0;
    }
    if (*audit) {
      const auto c = LoadWithOverrides(audit_config, audit_over);
      const auto r = RunAudit(c);
      for (const auto& note : r.notes) std::cerr << "note: " << note << "\n";
      std::cout << "dejavu_score@" << FormatNumber(r.report.p_default) << " = " << FormatNumber(r.report.DefaultScore())
                << "\n";
      return 0;
    }
    if (*sweep) {
      const auto c = LoadWithOverrides(sweep_config, sweep_over);
      const auto r = RunSweep(c, ParseAxis(axis));
      for (const auto& m : r.missing) std::cerr << "missing: " << m << "\n";
      std::cerr << r.rows.size() << " rows written to " << c.output_dir << "\n";
      return r.complete() ? 0 : 3;
    }
    if (*probe) return RunProbe(probe_train, probe_test, probe_config, probe_out);
    if (*report) return RunReport(report_in, report_out);
    if (*validate) return RunValidate(validate_stores, validate_crops, validate_split);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
