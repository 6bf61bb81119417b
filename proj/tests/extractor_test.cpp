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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dejavu/extractor.hpp"
#include "test_util.hpp"

namespace dejavu {
namespace {

using testing::ScratchDir;

template <typename F>
ErrorCode CodeOf(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInvalidArgument;
}

// Embeds a crop as its rectangle, scaled per layer.
class FakeModel : public EmbeddingModel {
 public:
  explicit FakeModel(int bad_rows = 0) : bad_rows_(bad_rows) {}
  std::string tag() const override { return "fake"; }
  int epoch() const override { return 7; }
  bool HasLayer(int layer) const override { return layer == 0 || layer == 1; }
  int LayerWidth(int layer) const override { return 4 + layer; }
  Matrix Embed(std::span<const CropRequest> batch, int layer) override {
    ++calls;
    Matrix m(static_cast<Eigen::Index>(batch.size()) + bad_rows_, LayerWidth(layer));
    m.setZero();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& c = batch[i].crop;
      m.row(static_cast<Eigen::Index>(i)).head(4) << float(c.x0), float(c.y0), float(c.x1), float(c.y1);
      m.row(static_cast<Eigen::Index>(i)) *= float(layer + 1);
    }
    return m;
  }
  int calls = 0;

 private:
  int bad_rows_;
};

std::vector<CropRequest> Requests(int n) {
  std::vector<CropRequest> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(CropRequest{"img" + std::to_string(i), "", 10, 10, Rect{0, 0, 1 + i % 9, 2}, i % 3});
  }
  return out;
}

ExtractionJob Job(const std::filesystem::path& dir) {
  ExtractionJob job;
  job.model = "fake";
  job.layers = {0, 1};
  job.output_dir = dir.string();
  job.batch_size = 4;
  return job;
}

TEST(ExtractionJobTest, Validate) {
  ExtractionJob job;
  job.model = "m";
  job.output_dir = "o";
  EXPECT_NO_THROW(job.Validate());
  job.layers = {4};
  EXPECT_EQ(CodeOf([&] { job.Validate(); }), ErrorCode::kLayerUnavailable);
  job.layers = {0};
  job.batch_size = 0;
  EXPECT_EQ(CodeOf([&] { job.Validate(); }), ErrorCode::kInvalidConfig);
}

TEST(CropManifestTest, ReadsOneRectPerLine) {
  std::istringstream in("a.jpg\t20\t10\t0,0,5,10\nb.jpg\t8\t8\t1,1,3,3\n");
  const auto r = ReadCropManifest(in, "imgs");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1].id, "b.jpg");
  EXPECT_EQ(r[1].image_path, (std::filesystem::path("imgs") / "b.jpg").string());
  EXPECT_EQ(r[0].crop.x1, 5);
  EXPECT_EQ(r[0].width, 20);
}

TEST(CropManifestTest, RejectsMultipleRects) {
  std::istringstream in("a.jpg\t20\t10\t0,0,5,10;1,1,2,2\n");
  EXPECT_EQ(CodeOf([&] { ReadCropManifest(in); }), ErrorCode::kParseError);
}

TEST(RunExtractionTest, WritesConventionNamedStores) {
  const auto dir = ScratchDir("extract");
  FakeModel model;
  const auto req = Requests(10);
  const auto paths = RunExtraction(Job(dir), model, req, View::kPeriphery, "crops.tsv");
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(std::filesystem::path(paths[0]).filename(), "fake_periphery_layer0_ep7.emb");
  EXPECT_EQ(std::filesystem::path(paths[1]).filename(), "fake_periphery_layer1_ep7.emb");
  EXPECT_EQ(model.calls, 6);  // 3 batches per layer
  const auto s = ReadStore(paths[1]);
  EXPECT_EQ(s.size(), 10u);
  EXPECT_EQ(s.dim(), 5);
  EXPECT_EQ(s.meta.layer_index, 1);
  EXPECT_EQ(s.meta.epoch, 7);
  EXPECT_EQ(s.meta.view, View::kPeriphery);
  EXPECT_EQ(s.meta.source, "crops.tsv");
  for (std::size_t i = 0; i < req.size(); ++i) {
    EXPECT_EQ(s.ids[i], req[i].id);
    EXPECT_EQ(s.labels[i], req[i].label);
    EXPECT_FLOAT_EQ(s.rows(static_cast<Eigen::Index>(i), 2), 2.0f * float(req[i].crop.x1));
  }
}

TEST(RunExtractionTest, UnlabeledRequestsGiveUnlabeledStore) {
  const auto dir = ScratchDir("extract_unlabeled");
  FakeModel model;
  auto req = Requests(3);
  for (auto& r : req) r.label = kUnlabeled;
  auto job = Job(dir);
  job.layers = {0};
  const auto s = ReadStore(RunExtraction(job, model, req, View::kFull).at(0));
  EXPECT_TRUE(s.labels.empty());
}

TEST(RunExtractionTest, Errors) {
  const auto dir = ScratchDir("extract_errors");
  FakeModel model;
  auto job = Job(dir);
  job.layers = {2};
  EXPECT_EQ(CodeOf([&] { RunExtraction(job, model, Requests(2), View::kFull); }), ErrorCode::kLayerUnavailable);

  FakeModel bad(1);
  EXPECT_EQ(CodeOf([&] { RunExtraction(Job(dir), bad, Requests(2), View::kFull); }), ErrorCode::kShapeMismatch);

  auto req = Requests(2);
  req[1].crop = Rect{0, 0, 11, 2};
  EXPECT_EQ(CodeOf([&] { RunExtraction(Job(dir), model, req, View::kFull); }), ErrorCode::kMissingImage);
}

TEST(ValidateStoreFileTest, ChecksParseAndAlignment) {
  const auto dir = ScratchDir("extract_validate");
  FakeModel model;
  const auto req = Requests(5);
  auto job = Job(dir);
  job.layers = {0};
  const auto path = RunExtraction(job, model, req, View::kFull).at(0);

  std::vector<std::string> ids;
  for (const auto& r : req) ids.push_back(r.id);
  EXPECT_TRUE(ValidateStoreFile(path, &ids).ok);
  ids.pop_back();
  ids.push_back("other");
  const auto mismatch = ValidateStoreFile(path, &ids);
  EXPECT_FALSE(mismatch.ok);
  EXPECT_NE(mismatch.message.find("1 missing, 1 extra"), std::string::npos);

  SplitPlan plan;
  for (const auto& r : req) plan.label_of[r.id] = r.label;
  EXPECT_TRUE(ValidateStoreFile(path, nullptr, &plan).ok);
  plan.label_of.erase("img0");
  EXPECT_FALSE(ValidateStoreFile(path, nullptr, &plan).ok);

  const auto junk = dir / "junk.emb";
  std::ofstream(junk) << "not a store";
  const auto bad = ValidateStoreFile(junk.string());
  EXPECT_FALSE(bad.ok);
  EXPECT_NE(bad.message.find("BadMagic"), std::string::npos);
}

}  // namespace
}  // namespace dejavu
