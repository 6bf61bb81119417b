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

// Contract between the audit core and an external embedding extractor.
//
// The extractor itself (model loading, image decoding, preprocessing) lives
// outside this library. This header fixes what it must hand back: an
// EmbeddingModel that embeds batches of crops at a tapped layer, and the
// driver that turns its output into conforming store files. The core-side
// checks (strict store validation, id alignment with the crop manifest) are
// here as well so that an adapter in any language can call them through the
// `validate` CLI verb.

#ifndef DEJAVU_EXTRACTOR_HPP_
#define DEJAVU_EXTRACTOR_HPP_

#include <algorithm>
#include <filesystem>
#include <istream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dejavu/crop_geometry.hpp"
#include "dejavu/embedding_store.hpp"
#include "dejavu/error.hpp"
#include "dejavu/lab_runner.hpp"
#include "dejavu/split_protocol.hpp"

namespace dejavu {

inline constexpr int kMaxTappedLayer = 3;

struct ExtractionJob {
  std::string model;
  std::string checkpoint;
  std::vector<int> layers = {0};
  std::string crop_manifest;
  std::string split_manifest;
  std::string output_dir;
  int batch_size = 64;
  std::string device = "cpu";

  void Validate() const {
    if (model.empty()) throw Error(ErrorCode::kInvalidConfig, "extraction job needs a model");
    if (output_dir.empty()) throw Error(ErrorCode::kInvalidConfig, "extraction job needs an output_dir");
    if (batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
    if (layers.empty()) throw Error(ErrorCode::kInvalidConfig, "no layers requested");
    for (int l : layers) {
      if (l < 0 || l > kMaxTappedLayer) {
        throw Error(ErrorCode::kLayerUnavailable, "layer " + std::to_string(l) + " outside [0, 3]");
      }
    }
  }
};

// One crop to embed. A crop covering the whole image stands for the full
// view.
struct CropRequest {
  std::string id;
  std::string image_path;
  int width = 0;
  int height = 0;
  Rect crop;
  int label = kUnlabeled;
};

class EmbeddingModel {
 public:
  virtual ~EmbeddingModel() = default;
  virtual std::string tag() const = 0;
  virtual int epoch() const { return 0; }
  virtual bool HasLayer(int layer) const = 0;
  virtual int LayerWidth(int layer) const = 0;
  // One row per request, LayerWidth(layer) columns.
  virtual Matrix Embed(std::span<const CropRequest> batch, int layer) = 0;
};

// Crop manifest lines share the box-manifest syntax with exactly one
// rectangle: id<TAB>width<TAB>height<TAB>x0,y0,x1,y1.
inline std::vector<CropRequest> ReadCropManifest(std::istream& in, const std::string& image_dir = "") {
  std::vector<CropRequest> out;
  for (auto& rec : ReadBoxManifest(in)) {
    if (rec.boxes.size() != 1) {
      throw Error(ErrorCode::kParseError, "crop manifest entry '" + rec.id + "' needs exactly one rectangle");
    }
    const auto& b = rec.boxes.front();
    CropRequest r;
    r.id = rec.id;
    r.image_path = image_dir.empty() ? rec.id : (std::filesystem::path(image_dir) / rec.id).string();
    r.width = rec.width;
    r.height = rec.height;
    r.crop = Rect{b.x0, b.y0, b.x1, b.y1};
    out.push_back(std::move(r));
  }
  return out;
}

namespace extractor_internal {

inline void CheckRequest(const CropRequest& r) {
  const Rect& c = r.crop;
  if (r.width <= 0 || r.height <= 0 || c.x0 < 0 || c.y0 < 0 || c.x1 > r.width || c.y1 > r.height ||
      c.x0 >= c.x1 || c.y0 >= c.y1) {
    throw Error(ErrorCode::kMissingImage, "crop for '" + r.id + "' lies outside its image");
  }
}

}  // namespace extractor_internal

// Embeds every request at every job layer and writes one store per layer,
// named {tag}_{view}_layer{L}_ep{E}.emb. Returns the written paths.
inline std::vector<std::string> RunExtraction(const ExtractionJob& job, EmbeddingModel& model,
                                              const std::vector<CropRequest>& requests, View view,
                                              const std::string& source = "") {
  job.Validate();
  for (const auto& r : requests) extractor_internal::CheckRequest(r);
  for (int layer : job.layers) {
    if (!model.HasLayer(layer)) {
      throw Error(ErrorCode::kLayerUnavailable,
                  "model " + model.tag() + " has no layer " + std::to_string(layer));
    }
  }
  std::filesystem::create_directories(job.output_dir);
  const bool labeled = std::any_of(requests.begin(), requests.end(),
                                   [](const CropRequest& r) { return r.label != kUnlabeled; });
  std::vector<std::string> written;
  for (int layer : job.layers) {
    const int width = model.LayerWidth(layer);
    EmbeddingSet set;
    set.rows.resize(static_cast<Eigen::Index>(requests.size()), width);
    const auto batch = static_cast<std::size_t>(job.batch_size);
    for (std::size_t start = 0; start < requests.size(); start += batch) {
      const std::size_t n = std::min(batch, requests.size() - start);
      const Matrix rows = model.Embed(std::span<const CropRequest>(requests).subspan(start, n), layer);
      if (rows.rows() != static_cast<Eigen::Index>(n) || rows.cols() != width) {
        throw Error(ErrorCode::kShapeMismatch,
                    "layer " + std::to_string(layer) + " returned " + std::to_string(rows.rows()) + "x" +
                        std::to_string(rows.cols()) + ", expected " + std::to_string(n) + "x" +
                        std::to_string(width));
      }
      set.rows.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = rows;
    }
    for (const auto& r : requests) {
      set.ids.push_back(r.id);
      if (labeled) set.labels.push_back(r.label);
    }
    set.meta = Provenance{model.tag(), layer, model.epoch(), view, source};
    const std::string name = lab::StoreFileName(model.tag(), view, layer, model.epoch());
    const auto path = (std::filesystem::path(job.output_dir) / name).string();
    WriteStore(set, path);
    written.push_back(path);
  }
  return written;
}

struct StoreCheck {
  bool ok = false;
  std::string message;
};

// Core-side validation of a store file: strict parse, then optional id
// alignment with a crop manifest (equal id sets) and with a split plan
// (every id assigned to some set).
inline StoreCheck ValidateStoreFile(const std::string& path, const std::vector<std::string>* manifest_ids = nullptr,
                                    const SplitPlan* plan = nullptr) {
  EmbeddingSet set;
  try {
    set = ReadStore(path);
  } catch (const Error& e) {
    return {false, e.what()};
  }
  if (manifest_ids) {
    const std::set<std::string> want(manifest_ids->begin(), manifest_ids->end());
    const std::set<std::string> got(set.ids.begin(), set.ids.end());
    if (want != got) {
      std::size_t missing = 0;
      for (const auto& id : want) missing += got.count(id) ? 0 : 1;
      return {false, "id set differs from crop manifest: " + std::to_string(missing) + " missing, " +
                         std::to_string(got.size() - (want.size() - missing)) + " extra"};
    }
  }
  if (plan) {
    for (const auto& id : set.ids) {
      if (!plan->label_of.count(id)) return {false, "id '" + id + "' is not in the split manifest"};
    }
  }
  return {true, std::to_string(set.size()) + " rows, dim " + std::to_string(set.dim())};
}

}  // namespace dejavu

#endif  // DEJAVU_EXTRACTOR_HPP_
