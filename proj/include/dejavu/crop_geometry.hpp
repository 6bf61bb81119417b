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

// Periphery crops (largest axis-aligned rectangle that overlaps no foreground
// box) and the lower-left corner-crop surrogate.
//
// Coordinates are pixel edges with the origin at the top-left corner; a box
// (x0, y0, x1, y1) covers pixels [x0, x1) x [y0, y1). Rectangles that only
// share an edge with a box do not intersect it.

#ifndef DEJAVU_CROP_GEOMETRY_HPP_
#define DEJAVU_CROP_GEOMETRY_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dejavu/error.hpp"
#include "dejavu/text_io.hpp"

namespace dejavu {

struct BoundingBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * static_cast<std::int64_t>(height());
  }
  bool Intersects(const BoundingBox& b) const {
    return x0 < b.x1 && b.x0 < x1 && y0 < b.y1 && b.y0 < y1;
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

enum class CropShape { kRectangle, kSquare };

inline void ValidateBox(const BoundingBox& b, int width, int height) {
  if (!(0 <= b.x0 && b.x0 < b.x1 && b.x1 <= width && 0 <= b.y0 && b.y0 < b.y1 &&
        b.y1 <= height)) {
    throw Error(ErrorCode::kInvalidBox,
                "box (" + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," +
                    std::to_string(b.x1) + "," + std::to_string(b.y1) +
                    ") is empty or outside a " + std::to_string(width) + "x" +
                    std::to_string(height) + " image");
  }
}

// Largest empty rectangle (or square) with both sides >= min_side, ties broken
// by lowest y0 then lowest x0. Any maximal empty rectangle has every side on an
// image border or a box edge, so the search runs over the compressed grid of
// those coordinates: for every pair of horizontal bands it scans the columns
// that stay free across the band and measures each maximal free run.
inline std::optional<Rect> PeripheryCrop(int width, int height,
                                         std::span<const BoundingBox> boxes,
                                         int min_side = 1,
                                         CropShape shape = CropShape::kRectangle) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }
  if (min_side < 1) throw Error(ErrorCode::kInvalidArgument, "min_side must be >= 1");
  for (const auto& b : boxes) ValidateBox(b, width, height);

  std::vector<int> xs{0, width};
  std::vector<int> ys{0, height};
  for (const auto& b : boxes) {
    xs.push_back(b.x0);
    xs.push_back(b.x1);
    ys.push_back(b.y0);
    ys.push_back(b.y1);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  const std::size_t nx = xs.size() - 1;
  const std::size_t ny = ys.size() - 1;

  // blocked[j * nx + i]: compressed cell (i, j) lies inside some box.
  std::vector<char> blocked(nx * ny, 0);
  for (const auto& b : boxes) {
    const auto i0 = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), b.x0) - xs.begin());
    const auto i1 = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), b.x1) - xs.begin());
    const auto j0 = static_cast<std::size_t>(std::lower_bound(ys.begin(), ys.end(), b.y0) - ys.begin());
    const auto j1 = static_cast<std::size_t>(std::lower_bound(ys.begin(), ys.end(), b.y1) - ys.begin());
    for (std::size_t j = j0; j < j1; ++j) {
      for (std::size_t i = i0; i < i1; ++i) blocked[j * nx + i] = 1;
    }
  }

  std::optional<Rect> best;
  std::int64_t best_score = -1;
  auto consider = [&](Rect r) {
    if (r.width() < min_side || r.height() < min_side) return;
    std::int64_t score = r.area();
    if (shape == CropShape::kSquare) {
      const int side = std::min(r.width(), r.height());
      // The top-left placement inside r has the smallest (y0, x0).
      r = Rect{r.x0, r.y0, r.x0 + side, r.y0 + side};
      score = side;
    }
    if (score > best_score ||
        (score == best_score && std::tie(r.y0, r.x0) < std::tie(best->y0, best->x0))) {
      best = r;
      best_score = score;
    }
  };

  std::vector<char> column_free(nx);
  for (std::size_t top = 0; top < ny; ++top) {
    std::fill(column_free.begin(), column_free.end(), 1);
    for (std::size_t bottom = top; bottom < ny; ++bottom) {
      bool any_free = false;
      for (std::size_t i = 0; i < nx; ++i) {
        column_free[i] = column_free[i] && !blocked[bottom * nx + i];
        any_free = any_free || column_free[i];
      }
      if (!any_free) break;
      std::size_t i = 0;
      while (i < nx) {
        if (!column_free[i]) {
          ++i;
          continue;
        }
        std::size_t end = i;
        while (end < nx && column_free[end]) ++end;
        consider(Rect{xs[i], ys[top], xs[end], ys[bottom + 1]});
        i = end;
      }
    }
  }
  return best;
}

// Exact rational in (0, 1].
struct Fraction {
  std::int64_t numerator = 1;
  std::int64_t denominator = 3;
};

// Lower-left corner crop with sides floor(f * width) x floor(f * height).
inline Rect CornerCrop(int width, int height, Fraction f = {}) {
  if (f.denominator <= 0 || f.numerator <= 0 || f.numerator > f.denominator) {
    throw Error(ErrorCode::kInvalidArgument, "corner fraction must lie in (0, 1]");
  }
  const auto w = static_cast<int>(f.numerator * width / f.denominator);
  const auto h = static_cast<int>(f.numerator * height / f.denominator);
  if (w <= 0 || h <= 0) {
    throw Error(ErrorCode::kDegenerateCrop,
                "corner crop of a " + std::to_string(width) + "x" + std::to_string(height) +
                    " image has a zero-length side");
  }
  return Rect{0, height - h, w, height};
}

inline Fraction ParseFraction(const std::string& text) {
  const std::string where = "corner fraction";
  if (auto slash = text.find('/'); slash != std::string::npos) {
    return Fraction{text_io::ParseNumber<std::int64_t>(text.substr(0, slash), where),
                    text_io::ParseNumber<std::int64_t>(text.substr(slash + 1), where)};
  }
  // Decimal input is converted to a fraction over 10^6.
  const double v = text_io::ParseDouble(text, where);
  constexpr std::int64_t kScale = 1000000;
  return Fraction{static_cast<std::int64_t>(v * kScale + 0.5), kScale};
}

// One image's annotation: example_id<TAB>width<TAB>height<TAB>x0,y0,x1,y1[;...]
// An empty fourth field means no boxes.
struct BoxRecord {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<BoundingBox> boxes;
};

inline std::vector<BoxRecord> ReadBoxManifest(std::istream& in) {
  std::vector<BoxRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = "box manifest line " + std::to_string(line_no);
    auto fields = text_io::SplitTabs(line);
    if (fields.size() != 3 && fields.size() != 4) {
      throw Error(ErrorCode::kParseError, where + ": expected 4 fields");
    }
    BoxRecord rec;
    rec.id = fields[0];
    rec.width = text_io::ParseInt(fields[1], where);
    rec.height = text_io::ParseInt(fields[2], where);
    if (fields.size() == 4 && !fields[3].empty()) {
      for (const auto& item : text_io::SplitOn(fields[3], ';')) {
        auto c = text_io::SplitOn(item, ',');
        if (c.size() != 4) throw Error(ErrorCode::kParseError, where + ": bad box '" + item + "'");
        rec.boxes.push_back(BoundingBox{text_io::ParseInt(c[0], where), text_io::ParseInt(c[1], where),
                                        text_io::ParseInt(c[2], where), text_io::ParseInt(c[3], where)});
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<BoxRecord> ReadBoxManifestFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open box manifest '" + path + "'");
  return ReadBoxManifest(in);
}

inline void WriteCropLine(std::ostream& out, const std::string& id, int width, int height,
                          const Rect& r) {
  out << id << '\t' << width << '\t' << height << '\t' << r.x0 << ',' << r.y0 << ',' << r.x1
      << ',' << r.y1 << '\n';
}

}  // namespace dejavu

#endif  // DEJAVU_CROP_GEOMETRY_HPP_
