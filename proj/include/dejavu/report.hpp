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

// Report serialization (JSON, CSV) and static rendering (PNG plots with an
// HTML index). Output bytes depend only on the report contents.

#ifndef DEJAVU_REPORT_HPP_
#define DEJAVU_REPORT_HPP_

#include <png.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dejavu/error.hpp"
#include "dejavu/knn.hpp"
#include "dejavu/metrics.hpp"
#include "json.hpp"

namespace dejavu {

using Json = nlohmann::ordered_json;

// Shortest text that round-trips the value; locale independent.
inline std::string FormatNumber(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline const char* CategoryName(Category c) {
  switch (c) {
    case Category::kUnassociated: return "unassociated";
    case Category::kMemorized: return "memorized";
    case Category::kMisrepresented: return "misrepresented";
    case Category::kCorrelated: return "correlated";
  }
  return "unknown";
}

inline Json CurveToJson(const ConfidenceCurve& curve) {
  Json points = Json::array();
  for (const auto& p : curve.points) {
    points.push_back({{"percentile", p.percentile}, {"count", p.count}, {"accuracy", p.accuracy}});
  }
  return points;
}

inline ConfidenceCurve CurveFromJson(const Json& j) {
  ConfidenceCurve curve;
  for (const auto& p : j) {
    curve.points.push_back({p.at("percentile").get<double>(), p.at("count").get<std::size_t>(),
                            p.at("accuracy").get<double>()});
  }
  return curve;
}

inline Json ReportToJson(const DejaVuReport& r) {
  Json j;
  j["metadata"] = {{"target", r.metadata.target_tag},
                   {"reference", r.metadata.reference_tag},
                   {"k", r.metadata.k},
                   {"split_seed", r.metadata.split_seed},
                   {"averaged_over", r.metadata.averaged_over}};
  j["p_default"] = r.p_default;
  j["dejavu_score"] = r.DefaultScore();
  Json scores = Json::array();
  for (const auto& s : r.score_at_p) scores.push_back({{"percentile", s.percentile}, {"score", s.score}});
  j["score_at_p"] = scores;
  j["curve_target"] = CurveToJson(r.curve_target);
  j["curve_reference"] = CurveToJson(r.curve_reference);
  j["partition"] = {{"unassociated", r.partition.unassociated},
                    {"memorized", r.partition.memorized},
                    {"misrepresented", r.partition.misrepresented},
                    {"correlated", r.partition.correlated},
                    {"total", r.partition.total}};
  Json shares;
  for (int c = 0; c < 4; ++c) {
    shares[CategoryName(static_cast<Category>(c))] = r.partition_shares[static_cast<std::size_t>(c)];
  }
  j["partition_shares"] = shares;
  if (r.linear_probe) {
    j["linear_probe"] = {{"train_accuracy", r.linear_probe->train_accuracy},
                         {"test_accuracy", r.linear_probe->test_accuracy},
                         {"gap", r.linear_probe->gap}};
  }
  return j;
}

inline DejaVuReport ReportFromJson(const Json& j) {
  try {
    DejaVuReport r;
    const auto& m = j.at("metadata");
    r.metadata.target_tag = m.at("target").get<std::string>();
    r.metadata.reference_tag = m.at("reference").get<std::string>();
    r.metadata.k = m.at("k").get<std::size_t>();
    r.metadata.split_seed = m.at("split_seed").get<std::uint64_t>();
    r.metadata.averaged_over = m.at("averaged_over").get<int>();
    r.p_default = j.at("p_default").get<double>();
    for (const auto& s : j.at("score_at_p")) {
      r.score_at_p.push_back({s.at("percentile").get<double>(), s.at("score").get<double>()});
    }
    r.curve_target = CurveFromJson(j.at("curve_target"));
    r.curve_reference = CurveFromJson(j.at("curve_reference"));
    const auto& p = j.at("partition");
    r.partition.unassociated = p.at("unassociated").get<std::size_t>();
    r.partition.memorized = p.at("memorized").get<std::size_t>();
    r.partition.misrepresented = p.at("misrepresented").get<std::size_t>();
    r.partition.correlated = p.at("correlated").get<std::size_t>();
    r.partition.total = p.at("total").get<std::size_t>();
    for (int c = 0; c < 4; ++c) {
      r.partition_shares[static_cast<std::size_t>(c)] =
          j.at("partition_shares").at(CategoryName(static_cast<Category>(c))).get<double>();
    }
    if (j.contains("linear_probe")) {
      const auto& lp = j.at("linear_probe");
      r.linear_probe = LinearProbeSummary{lp.at("train_accuracy").get<double>(),
                                          lp.at("test_accuracy").get<double>(),
                                          lp.at("gap").get<double>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("malformed report: ") + e.what());
  }
}

// One row per example, paired by id.
inline void WriteRecordsCsv(std::ostream& out, const std::vector<InferenceRecord>& target,
                            const std::vector<InferenceRecord>& reference) {
  const auto pairs = metrics_internal::Pair(target, reference);
  out << "example_id,true_label,target_prediction,target_confidence,reference_prediction,"
         "reference_confidence,category\n";
  for (const auto& [t, r] : pairs) {
    out << t->example_id << ',' << t->true_label << ',' << t->predicted_label << ','
        << FormatNumber(t->confidence) << ',' << r->predicted_label << ','
        << FormatNumber(r->confidence) << ','
        << CategoryName(Classify(t->correct(), r->correct())) << '\n';
  }
}

inline void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
}

inline std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Raster plots.

struct Color {
  std::uint8_t r, g, b;
};

inline constexpr Color kWhite{255, 255, 255};
inline constexpr Color kAxis{40, 40, 40};
inline constexpr Color kGrid{225, 225, 225};
inline constexpr std::array<Color, 6> kPalette{{{31, 119, 180},
                                                {255, 127, 14},
                                                {44, 160, 44},
                                                {214, 39, 40},
                                                {148, 103, 189},
                                                {140, 86, 75}}};

class Canvas {
 public:
  Canvas(int width, int height) : width_(width), height_(height) {
    pixels_.resize(static_cast<std::size_t>(width) * height * 3, 255);
  }

  int width() const { return width_; }
  int height() const { return height_; }

  void Set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
    auto* p = &pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void FillRect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) Set(x, y, c);
    }
  }

  void Line(int x0, int y0, int x1, int y1, Color c, int thickness = 1) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    const int h = thickness / 2;
    while (true) {
      FillRect(x0 - h, y0 - h, x0 + (thickness - 1 - h), y0 + (thickness - 1 - h), c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  std::string EncodePng() const {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_write_struct(&png, &info);
      throw Error(ErrorCode::kIoFailure, "png encoder unavailable");
    }
    std::string out;
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw Error(ErrorCode::kIoFailure, "png encoding failed");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t n) {
          static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<char*>(data), n);
        },
        nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width_), static_cast<png_uint_32>(height_), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 9);
    png_write_info(png, info);
    for (int y = 0; y < height_; ++y) {
      png_write_row(png, const_cast<png_bytep>(&pixels_[static_cast<std::size_t>(y) * width_ * 3]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
  }

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

// Range covering every value, padded when degenerate.
inline Range DataRange(const std::vector<Series>& series, bool use_x, std::optional<Range> floor = {}) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    for (double v : use_x ? s.x : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (floor) {
    lo = std::min(lo, floor->lo);
    hi = std::max(hi, floor->hi);
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

namespace report_internal {

inline constexpr int kWidth = 640;
inline constexpr int kHeight = 400;
inline constexpr int kLeft = 60;
inline constexpr int kRight = 20;
inline constexpr int kTop = 20;
inline constexpr int kBottom = 50;

struct Frame {
  Range x;
  Range y;
  int PixelX(double v) const {
    return kLeft + static_cast<int>(std::lround((v - x.lo) / (x.hi - x.lo) * (kWidth - kLeft - kRight)));
  }
  int PixelY(double v) const {
    return kHeight - kBottom -
           static_cast<int>(std::lround((v - y.lo) / (y.hi - y.lo) * (kHeight - kTop - kBottom)));
  }
};

inline void DrawAxes(Canvas& c, const Frame& f) {
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y.lo + (f.y.hi - f.y.lo) * i / 4.0;
    c.Line(kLeft, f.PixelY(v), kWidth - kRight, f.PixelY(v), kGrid);
    c.Line(kLeft - 5, f.PixelY(v), kLeft, f.PixelY(v), kAxis);
  }
  for (int i = 0; i <= 4; ++i) {
    const double v = f.x.lo + (f.x.hi - f.x.lo) * i / 4.0;
    c.Line(f.PixelX(v), kHeight - kBottom, f.PixelX(v), kHeight - kBottom + 5, kAxis);
  }
  if (f.y.lo < 0.0 && f.y.hi > 0.0) c.Line(kLeft, f.PixelY(0), kWidth - kRight, f.PixelY(0), kAxis);
  c.Line(kLeft, kTop, kLeft, kHeight - kBottom, kAxis, 2);
  c.Line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, kAxis, 2);
}

}  // namespace report_internal

inline Canvas PlotLines(const std::vector<Series>& series, Range x, Range y) {
  using namespace report_internal;
  Canvas c(kWidth, kHeight);
  const Frame f{x, y};
  DrawAxes(c, f);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const Color col = kPalette[s % kPalette.size()];
    const auto& sr = series[s];
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      const int px = f.PixelX(sr.x[i]);
      const int py = f.PixelY(sr.y[i]);
      if (i > 0) c.Line(f.PixelX(sr.x[i - 1]), f.PixelY(sr.y[i - 1]), px, py, col, 2);
      c.FillRect(px - 3, py - 3, px + 3, py + 3, col);
    }
  }
  return c;
}

// Grouped bars: groups[g][s] is the value of series s in group g.
inline Canvas PlotBars(const std::vector<std::vector<double>>& groups, Range y) {
  using namespace report_internal;
  Canvas c(kWidth, kHeight);
  const Frame f{{0.0, static_cast<double>(std::max<std::size_t>(1, groups.size()))}, y};
  DrawAxes(c, f);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t n = groups[g].size();
    for (std::size_t s = 0; s < n; ++s) {
      const double x0 = static_cast<double>(g) + 0.15 + 0.7 * static_cast<double>(s) / n;
      const double x1 = static_cast<double>(g) + 0.15 + 0.7 * static_cast<double>(s + 1) / n;
      c.FillRect(f.PixelX(x0) + 1, f.PixelY(0.0), f.PixelX(x1) - 1, f.PixelY(groups[g][s]),
                 kPalette[s % kPalette.size()]);
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Figures and HTML index.

struct Figure {
  std::string file;
  std::string title;
  std::string x_label;
  std::string y_label;
  Range x;
  Range y;
  std::vector<std::string> legend;
  // Data table: header then rows.
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct RenderResult {
  std::vector<Figure> figures;
  std::vector<std::string> notes;
};

inline std::string HtmlEscape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::string RenderIndexHtml(const std::string& title, const RenderResult& result) {
  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << HtmlEscape(title)
    << "</title></head>\n<body>\n<h1>" << HtmlEscape(title) << "</h1>\n";
  for (const auto& note : result.notes) h << "<p><em>" << HtmlEscape(note) << "</em></p>\n";
  for (const auto& f : result.figures) {
    h << "<h2>" << HtmlEscape(f.title) << "</h2>\n<img src=\"" << HtmlEscape(f.file) << "\" alt=\""
      << HtmlEscape(f.title) << "\">\n<p>x: " << HtmlEscape(f.x_label) << " [" << FormatNumber(f.x.lo)
      << ", " << FormatNumber(f.x.hi) << "]; y: " << HtmlEscape(f.y_label) << " ["
      << FormatNumber(f.y.lo) << ", " << FormatNumber(f.y.hi) << "]</p>\n";
    if (!f.legend.empty()) {
      h << "<ul>\n";
      for (std::size_t i = 0; i < f.legend.size(); ++i) {
        const Color c = kPalette[i % kPalette.size()];
        char swatch[8];
        std::snprintf(swatch, sizeof(swatch), "#%02x%02x%02x", c.r, c.g, c.b);
        h << "<li><span style=\"color:" << swatch << "\">&#9632;</span> " << HtmlEscape(f.legend[i])
          << "</li>\n";
      }
      h << "</ul>\n";
    }
    h << "<table border=\"1\">\n<tr>";
    for (const auto& col : f.columns) h << "<th>" << HtmlEscape(col) << "</th>";
    h << "</tr>\n";
    for (const auto& row : f.rows) {
      h << "<tr>";
      for (const auto& cell : row) h << "<td>" << HtmlEscape(cell) << "</td>";
      h << "</tr>\n";
    }
    h << "</table>\n";
  }
  h << "</body></html>\n";
  return h.str();
}

// Writes curves.png, score_by_p.png, partition.png, linear_probe.png (when
// present) and index.html into dir.
inline RenderResult RenderReport(const DejaVuReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  RenderResult out;
  auto emit = [&](Figure fig, const Canvas& canvas) {
    WriteTextFile(dir / fig.file, canvas.EncodePng());
    out.figures.push_back(std::move(fig));
  };

  {
    Series t{r.metadata.target_tag + " (target)", {}, {}};
    Series ref{r.metadata.reference_tag + " (reference)", {}, {}};
    Figure fig{"curves.png", "Accuracy of the top-p% most confident examples", "percentile p",
               "accuracy", {}, {0.0, 1.0}, {t.name, ref.name}, {"p", "target", "reference"}, {}};
    for (std::size_t i = 0; i < r.curve_target.points.size(); ++i) {
      const auto& a = r.curve_target.points[i];
      const auto& b = r.curve_reference.points[i];
      t.x.push_back(a.percentile);
      t.y.push_back(a.accuracy);
      ref.x.push_back(b.percentile);
      ref.y.push_back(b.accuracy);
      fig.rows.push_back({FormatNumber(a.percentile), FormatNumber(a.accuracy), FormatNumber(b.accuracy)});
    }
    if (r.curve_target.points.empty()) out.notes.push_back("confidence curves empty; figure skipped");
    else {
      fig.x = DataRange({t, ref}, true);
      emit(fig, PlotLines({t, ref}, fig.x, fig.y));
    }
  }
  {
    Series s{"score", {}, {}};
    Figure fig{"score_by_p.png", "Score versus percentile", "percentile p", "target minus reference accuracy",
               {}, {}, {"score"}, {"p", "score"}, {}};
    for (const auto& sp : r.score_at_p) {
      s.x.push_back(sp.percentile);
      s.y.push_back(sp.score);
      fig.rows.push_back({FormatNumber(sp.percentile), FormatNumber(sp.score)});
    }
    if (s.x.empty()) out.notes.push_back("no scores; figure skipped");
    else {
      fig.x = DataRange({s}, true);
      fig.y = DataRange({s}, false, Range{0.0, 0.0});
      emit(fig, PlotLines({s}, fig.x, fig.y));
    }
  }
  {
    Figure fig{"partition.png", "Partition of target-set examples", "category", "share",
               {0.0, 4.0}, {0.0, 1.0}, {}, {"category", "count", "share"}, {}};
    std::vector<std::vector<double>> groups;
    const std::array<std::size_t, 4> counts{r.partition.unassociated, r.partition.memorized,
                                            r.partition.misrepresented, r.partition.correlated};
    for (int c = 0; c < 4; ++c) {
      const auto i = static_cast<std::size_t>(c);
      groups.push_back({r.partition_shares[i]});
      fig.rows.push_back({CategoryName(static_cast<Category>(c)), std::to_string(counts[i]),
                          FormatNumber(r.partition_shares[i])});
    }
    emit(fig, PlotBars(groups, fig.y));
    out.notes.push_back(
        "misrepresented share is reported raw; part of it is chance agreement of the reference model");
  }
  if (r.linear_probe) {
    Figure fig{"linear_probe.png", "Linear probe versus score", "quantity", "value",
               {0.0, 2.0}, {}, {"train accuracy", "test accuracy"}, {"quantity", "value"}, {}};
    const auto& lp = *r.linear_probe;
    fig.rows = {{"train_accuracy", FormatNumber(lp.train_accuracy)},
                {"test_accuracy", FormatNumber(lp.test_accuracy)},
                {"gap", FormatNumber(lp.gap)},
                {"dejavu_score", FormatNumber(r.DefaultScore())}};
    const std::vector<std::vector<double>> groups{{lp.train_accuracy, lp.test_accuracy},
                                                  {lp.gap, r.DefaultScore()}};
    fig.y = {std::min({0.0, lp.gap, r.DefaultScore()}), 1.0};
    emit(fig, PlotBars(groups, fig.y));
  } else {
    out.notes.push_back("linear_probe absent; figure skipped");
  }
  WriteTextFile(dir / "index.html", RenderIndexHtml("Audit report: " + r.metadata.target_tag + " vs " +
                                                        r.metadata.reference_tag,
                                                    out));
  return out;
}

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::string metric;
  double estimate = 0.0;
};

inline void WriteSweepCsv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "axis,value,metric,estimate\n";
  for (const auto& r : rows) {
    out << r.axis << ',' << FormatNumber(r.value) << ',' << r.metric << ',' << FormatNumber(r.estimate)
        << '\n';
  }
}

// Line plot of the selected metrics against the axis value.
inline RenderResult RenderSweep(const std::string& axis, const std::vector<SweepRow>& rows,
                                const std::filesystem::path& dir,
                                const std::vector<std::string>& metrics = {"dejavu_score", "probe_gap"}) {
  std::filesystem::create_directories(dir);
  RenderResult out;
  std::vector<Series> series;
  Figure fig{"sweep_" + axis + ".png", "Metrics versus " + axis, axis, "estimate", {}, {}, {}, {"value"}, {}};
  std::map<double, std::vector<std::string>> table;
  for (const auto& m : metrics) {
    Series s{m, {}, {}};
    for (const auto& r : rows) {
      if (r.metric == m) {
        s.x.push_back(r.value);
        s.y.push_back(r.estimate);
      }
    }
    if (s.x.empty()) {
      out.notes.push_back("metric " + m + " absent; series skipped");
      continue;
    }
    fig.legend.push_back(m);
    fig.columns.push_back(m);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      auto& row = table[s.x[i]];
      row.resize(fig.columns.size() - 1);
      row.back() = FormatNumber(s.y[i]);
    }
    series.push_back(std::move(s));
  }
  for (auto& [value, cells] : table) {
    cells.resize(fig.columns.size() - 1);
    std::vector<std::string> row{FormatNumber(value)};
    row.insert(row.end(), cells.begin(), cells.end());
    fig.rows.push_back(std::move(row));
  }
  if (!series.empty()) {
    fig.x = DataRange(series, true);
    fig.y = DataRange(series, false, Range{0.0, 0.0});
    WriteTextFile(dir / fig.file, PlotLines(series, fig.x, fig.y).EncodePng());
    out.figures.push_back(std::move(fig));
  }
  WriteTextFile(dir / ("sweep_" + axis + ".html"), RenderIndexHtml("Sweep over " + axis, out));
  return out;
}

}  // namespace dejavu

#endif  // DEJAVU_REPORT_HPP_
