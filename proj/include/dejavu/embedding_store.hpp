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

// On-disk embedding dumps and the in-memory EmbeddingSet.
//
// Byte layout (all integers little-endian, see docs/store_format.md):
//
//   offset  size  field
//   0       4     magic "DJVE"
//   4       2     format version (1)
//   6       2     flags; bit 0 = labels present, other bits must be zero
//   8       4     dim
//   12      4     meta block length M
//   16      8     row count N
//   24      M     meta block
//   24+M    4     CRC-32 of bytes [0, 24+M)
//   then    ...   N ids, each u32 byte length + UTF-8 bytes
//   then    4N    labels as int32 (only when flag bit 0 is set)
//   then    4ND   row-major float32 matrix
//
// Meta block: u16 length + model tag bytes, i32 layer, i32 epoch, u8 view,
// u16 length + provenance string bytes.

#ifndef DEJAVU_EMBEDDING_STORE_HPP_
#define DEJAVU_EMBEDDING_STORE_HPP_

#include <zlib.h>

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dejavu/error.hpp"

namespace dejavu {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class View : std::uint8_t { kPeriphery = 0, kCorner = 1, kFull = 2, kObject = 3 };

inline std::string_view ViewName(View v) {
  switch (v) {
    case View::kPeriphery: return "periphery";
    case View::kCorner: return "corner";
    case View::kFull: return "full";
    case View::kObject: return "object";
  }
  return "unknown";
}

inline View ParseView(std::string_view name) {
  if (name == "periphery" || name == "background") return View::kPeriphery;
  if (name == "corner") return View::kCorner;
  if (name == "full") return View::kFull;
  if (name == "object") return View::kObject;
  throw Error(ErrorCode::kInvalidArgument, "unknown view '" + std::string(name) + "'");
}

struct Provenance {
  std::string model_tag;
  // 0 = backbone ... 3 = projector output.
  int layer_index = 0;
  int epoch = 0;
  View view = View::kFull;
  std::string source;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

inline constexpr int kUnlabeled = -1;

struct EmbeddingSet {
  Matrix rows;
  std::vector<std::string> ids;
  // Empty when the set carries no labels at all; kUnlabeled marks single rows.
  std::vector<std::int32_t> labels;
  Provenance meta;

  std::size_t size() const { return ids.size(); }
  int dim() const { return static_cast<int>(rows.cols()); }
  bool has_labels() const { return !labels.empty(); }
  bool fully_labeled() const {
    return has_labels() &&
           std::none_of(labels.begin(), labels.end(), [](auto l) { return l < 0; });
  }

  void Validate() const {
    if (static_cast<std::size_t>(rows.rows()) != ids.size()) {
      throw Error(ErrorCode::kInvalidArgument, "row count does not match id count");
    }
    if (has_labels() && labels.size() != ids.size()) {
      throw Error(ErrorCode::kInvalidArgument, "label count does not match id count");
    }
    if (meta.layer_index < 0 || meta.layer_index > 3) {
      throw Error(ErrorCode::kInvalidArgument, "layer index must lie in [0, 3]");
    }
    std::unordered_set<std::string_view> seen;
    seen.reserve(ids.size());
    for (const auto& id : ids) {
      if (!seen.insert(id).second) {
        throw Error(ErrorCode::kDuplicateId, "duplicate id '" + id + "' in embedding set");
      }
    }
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      if (!rows.row(r).allFinite()) {
        throw Error(ErrorCode::kNonFiniteEntry, "row " + std::to_string(r) + " is not finite", r);
      }
    }
  }

  // Rows whose ids are listed, in the listed order.
  EmbeddingSet Subset(const std::vector<std::string>& wanted) const {
    std::unordered_map<std::string_view, Eigen::Index> index;
    index.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], static_cast<Eigen::Index>(i));
    EmbeddingSet out;
    out.meta = meta;
    out.rows.resize(static_cast<Eigen::Index>(wanted.size()), rows.cols());
    for (std::size_t i = 0; i < wanted.size(); ++i) {
      auto it = index.find(wanted[i]);
      if (it == index.end()) {
        throw Error(ErrorCode::kInvalidArgument, "id '" + wanted[i] + "' not in embedding set");
      }
      out.rows.row(static_cast<Eigen::Index>(i)) = rows.row(it->second);
      out.ids.push_back(wanted[i]);
      if (has_labels()) out.labels.push_back(labels[static_cast<std::size_t>(it->second)]);
    }
    return out;
  }
};

namespace store_internal {

inline constexpr char kMagic[4] = {'D', 'J', 'V', 'E'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kFixedHeader = 24;

class Writer {
 public:
  void U8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void U16(std::uint16_t v) { Le(v, 2); }
  void U32(std::uint32_t v) { Le(v, 4); }
  void U64(std::uint64_t v) { Le(v, 8); }
  void I32(std::int32_t v) { U32(static_cast<std::uint32_t>(v)); }
  void F32(float v) { U32(std::bit_cast<std::uint32_t>(v)); }
  void Bytes(std::string_view s) { buf_.append(s); }
  std::string& buffer() { return buf_; }

 private:
  void Le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool Has(std::size_t n) const { return remaining() >= n; }

  std::uint64_t Le(int n) {
    Need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint8_t U8() { return static_cast<std::uint8_t>(Le(1)); }
  std::uint16_t U16() { return static_cast<std::uint16_t>(Le(2)); }
  std::uint32_t U32() { return static_cast<std::uint32_t>(Le(4)); }
  std::uint64_t U64() { return Le(8); }
  std::int32_t I32() { return static_cast<std::int32_t>(U32()); }
  float F32() { return std::bit_cast<float>(U32()); }
  std::string_view Bytes(std::size_t n) {
    Need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void Need(std::size_t n) const {
    if (!Has(n)) {
      throw Error(ErrorCode::kTruncatedPayload,
                  "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                      ", only " + std::to_string(remaining()) + " left");
    }
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::uint32_t Crc32(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed large buffers in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace store_internal

inline std::string SerializeStore(const EmbeddingSet& set) {
  set.Validate();
  using store_internal::Writer;
  Writer meta;
  if (set.meta.model_tag.size() > 0xffff || set.meta.source.size() > 0xffff) {
    throw Error(ErrorCode::kInvalidArgument, "provenance strings longer than 65535 bytes");
  }
  meta.U16(static_cast<std::uint16_t>(set.meta.model_tag.size()));
  meta.Bytes(set.meta.model_tag);
  meta.I32(set.meta.layer_index);
  meta.I32(set.meta.epoch);
  meta.U8(static_cast<std::uint8_t>(set.meta.view));
  meta.U16(static_cast<std::uint16_t>(set.meta.source.size()));
  meta.Bytes(set.meta.source);

  Writer w;
  w.Bytes(std::string_view(store_internal::kMagic, 4));
  w.U16(store_internal::kVersion);
  w.U16(set.has_labels() ? 1 : 0);
  w.U32(static_cast<std::uint32_t>(set.dim()));
  w.U32(static_cast<std::uint32_t>(meta.buffer().size()));
  w.U64(set.size());
  w.Bytes(meta.buffer());
  w.U32(store_internal::Crc32(w.buffer()));
  for (const auto& id : set.ids) {
    w.U32(static_cast<std::uint32_t>(id.size()));
    w.Bytes(id);
  }
  for (auto l : set.labels) w.I32(l);
  const float* data = set.rows.data();
  const std::size_t count = set.size() * static_cast<std::size_t>(set.dim());
  w.buffer().reserve(w.buffer().size() + 4 * count);
  for (std::size_t i = 0; i < count; ++i) w.F32(data[i]);
  return std::move(w.buffer());
}

inline EmbeddingSet ParseStore(std::string_view bytes) {
  using store_internal::Reader;
  Reader r(bytes);
  if (!r.Has(4) || std::memcmp(bytes.data(), store_internal::kMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "not an embedding store");
  }
  r.Bytes(4);
  if (!r.Has(store_internal::kFixedHeader - 4)) {
    throw Error(ErrorCode::kTruncatedPayload, "header is truncated");
  }
  const std::uint16_t version = r.U16();
  if (version != store_internal::kVersion) {
    throw Error(ErrorCode::kBadVersion, "unsupported format version " + std::to_string(version));
  }
  const std::uint16_t flags = r.U16();
  const std::uint32_t dim = r.U32();
  const std::uint32_t meta_len = r.U32();
  const std::uint64_t n = r.U64();
  if (!r.Has(static_cast<std::size_t>(meta_len) + 4)) {
    throw Error(ErrorCode::kTruncatedPayload, "meta block is truncated");
  }
  const std::size_t header_len = store_internal::kFixedHeader + meta_len;
  const std::uint32_t expected_crc = store_internal::Crc32(bytes.substr(0, header_len));
  std::string_view meta_bytes = r.Bytes(meta_len);
  if (r.U32() != expected_crc) {
    throw Error(ErrorCode::kCorruptHeader, "header checksum mismatch");
  }
  if ((flags & ~std::uint16_t{1}) != 0) {
    throw Error(ErrorCode::kCorruptHeader, "unknown flag bits set");
  }

  EmbeddingSet set;
  {
    Reader m(meta_bytes);
    try {
      const std::uint16_t tag_len = m.U16();
      set.meta.model_tag = std::string(m.Bytes(tag_len));
      set.meta.layer_index = m.I32();
      set.meta.epoch = m.I32();
      const std::uint8_t view = m.U8();
      if (view > 3) throw Error(ErrorCode::kCorruptHeader, "unknown view code");
      set.meta.view = static_cast<View>(view);
      const std::uint16_t src_len = m.U16();
      set.meta.source = std::string(m.Bytes(src_len));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kTruncatedPayload) {
        throw Error(ErrorCode::kCorruptHeader, "meta block shorter than its fields");
      }
      throw;
    }
    if (m.remaining() != 0) throw Error(ErrorCode::kCorruptHeader, "meta block has trailing bytes");
    if (set.meta.layer_index < 0 || set.meta.layer_index > 3) {
      throw Error(ErrorCode::kCorruptHeader, "layer index outside [0, 3]");
    }
  }

  // Each id takes at least 4 bytes; reject absurd counts before allocating.
  if (n > r.remaining() / 4) {
    throw Error(ErrorCode::kTruncatedPayload, "declared row count exceeds payload");
  }
  set.ids.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t len = r.U32();
    set.ids.emplace_back(r.Bytes(len));
  }
  if (flags & 1) {
    set.labels.resize(static_cast<std::size_t>(n));
    for (auto& l : set.labels) l = r.I32();
  }
  const std::uint64_t count = n * dim;
  if (dim != 0 && count / dim != n) throw Error(ErrorCode::kTruncatedPayload, "size overflow");
  if (r.remaining() != count * 4) {
    throw Error(r.remaining() < count * 4 ? ErrorCode::kTruncatedPayload : ErrorCode::kCorruptHeader,
                "matrix payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                    std::to_string(count * 4));
  }
  set.rows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  float* data = set.rows.data();
  for (std::uint64_t i = 0; i < count; ++i) data[i] = r.F32();
  set.Validate();
  return set;
}

inline void WriteStore(const EmbeddingSet& set, const std::string& path) {
  const std::string bytes = SerializeStore(set);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "write to '" + path + "' failed");
}

inline EmbeddingSet ReadStore(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open embedding store '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return ParseStore(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what(), e.detail());
  }
}

// CRC-32 of the serialized form; identical sets give identical checksums.
inline std::uint32_t StoreChecksum(const EmbeddingSet& set) {
  return store_internal::Crc32(SerializeStore(set));
}

struct AlignedIds {
  std::vector<std::string> common;  // sorted ascending
  std::vector<std::size_t> target_rows;
  std::vector<std::size_t> reference_rows;
  std::vector<std::string> only_target;
  std::vector<std::string> only_reference;
};

inline AlignedIds AlignPairs(const EmbeddingSet& target, const EmbeddingSet& reference) {
  if (!target.has_labels() || !reference.has_labels()) {
    throw Error(ErrorCode::kInvalidArgument, "both sets must be labeled to align");
  }
  auto sorted_rows = [](const EmbeddingSet& s) {
    std::vector<std::size_t> order(s.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s.ids[a] < s.ids[b]; });
    return order;
  };
  const auto t = sorted_rows(target);
  const auto r = sorted_rows(reference);
  AlignedIds out;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < t.size() || j < r.size()) {
    if (j == r.size() || (i < t.size() && target.ids[t[i]] < reference.ids[r[j]])) {
      out.only_target.push_back(target.ids[t[i++]]);
    } else if (i == t.size() || reference.ids[r[j]] < target.ids[t[i]]) {
      out.only_reference.push_back(reference.ids[r[j++]]);
    } else {
      out.common.push_back(target.ids[t[i]]);
      out.target_rows.push_back(t[i++]);
      out.reference_rows.push_back(r[j++]);
    }
  }
  if (out.common.empty()) {
    throw Error(ErrorCode::kEmptyIntersection, "target and reference share no example ids");
  }
  return out;
}

}  // namespace dejavu

#endif  // DEJAVU_EMBEDDING_STORE_HPP_
