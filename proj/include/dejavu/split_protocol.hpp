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

// Deterministic partition of an example catalog into the target (A),
// reference (B), public (X) and leftover (C) sets, plus optional per-class
// augmentation of A and B with draws from C.

#ifndef DEJAVU_SPLIT_PROTOCOL_HPP_
#define DEJAVU_SPLIT_PROTOCOL_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dejavu/error.hpp"
#include "dejavu/text_io.hpp"

namespace dejavu {

struct CatalogEntry {
  std::string id;
  int label = 0;
  bool has_bbox = false;
};

struct ExampleCatalog {
  std::vector<CatalogEntry> entries;

  // Throws kDuplicateId or kInvalidCatalog (labels not contiguous in [0, C)).
  void Validate() const {
    std::unordered_set<std::string> seen;
    seen.reserve(entries.size());
    int max_label = -1;
    for (const auto& e : entries) {
      if (!seen.insert(e.id).second) {
        throw Error(ErrorCode::kDuplicateId, "duplicate example id '" + e.id + "'");
      }
      if (e.label < 0) {
        throw Error(ErrorCode::kInvalidCatalog,
                    "negative class label for '" + e.id + "'");
      }
      max_label = std::max(max_label, e.label);
    }
    std::vector<bool> present(static_cast<std::size_t>(max_label + 1), false);
    for (const auto& e : entries) present[static_cast<std::size_t>(e.label)] = true;
    for (int c = 0; c <= max_label; ++c) {
      if (!present[static_cast<std::size_t>(c)]) {
        throw Error(ErrorCode::kInvalidCatalog,
                    "class labels are not contiguous: missing " + std::to_string(c));
      }
    }
  }

  int NumClasses() const {
    int max_label = -1;
    for (const auto& e : entries) max_label = std::max(max_label, e.label);
    return max_label + 1;
  }
};

struct SplitSizes {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t x = 0;
  // Per-model training-set size when A and B are augmented from C. Each class
  // is topped up to an equal share of this total.
  std::optional<std::size_t> augment_to;
};

struct ClassSplitCounts {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t aug_a = 0;
  std::size_t aug_b = 0;
};

struct SplitPlan {
  std::vector<std::string> set_a;
  std::vector<std::string> set_b;
  std::vector<std::string> set_x;
  std::vector<std::string> set_c;
  // Draws from C that extend A and B. The two draws may share ids.
  std::vector<std::string> aug_a;
  std::vector<std::string> aug_b;
  std::uint64_t seed = 0;
  SplitSizes sizes;
  std::map<int, ClassSplitCounts> per_class_counts;
  std::map<std::string, int> label_of;
};

namespace split_internal {

// Distributes `total` over bins with the given capacities as evenly as
// possible. Leftover units go to the lowest-index unsaturated bins.
inline std::optional<std::vector<std::size_t>> WaterFill(
    const std::vector<std::size_t>& caps, std::size_t total) {
  std::size_t capacity = 0;
  for (auto c : caps) capacity += c;
  if (capacity < total) return std::nullopt;
  std::vector<std::size_t> out(caps.size(), 0);
  if (caps.empty()) return out;
  auto filled = [&](std::size_t level) {
    std::size_t s = 0;
    for (auto c : caps) s += std::min(c, level);
    return s;
  };
  std::size_t lo = 0;
  std::size_t hi = *std::max_element(caps.begin(), caps.end());
  // Largest level with filled(level) <= total.
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo + 1) / 2;
    if (filled(mid) <= total) lo = mid; else hi = mid - 1;
  }
  std::size_t used = 0;
  for (std::size_t i = 0; i < caps.size(); ++i) {
    out[i] = std::min(caps[i], lo);
    used += out[i];
  }
  for (std::size_t i = 0; i < caps.size() && used < total; ++i) {
    if (caps[i] > out[i]) {
      ++out[i];
      ++used;
    }
  }
  return out;
}

}  // namespace split_internal

// Pure function of (catalog contents, sizes, seed). Catalog order does not
// matter: entries are canonicalized by id before any random draw.
inline SplitPlan PlanSplits(const ExampleCatalog& catalog, const SplitSizes& sizes,
                            std::uint64_t seed) {
  catalog.Validate();
  const int num_classes = catalog.NumClasses();

  std::vector<const CatalogEntry*> sorted;
  sorted.reserve(catalog.entries.size());
  for (const auto& e : catalog.entries) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const CatalogEntry* l, const CatalogEntry* r) { return l->id < r->id; });

  std::vector<std::vector<std::string>> bbox_by_class(static_cast<std::size_t>(num_classes));
  std::vector<std::string> unannotated;
  SplitPlan plan;
  plan.seed = seed;
  plan.sizes = sizes;
  for (const auto* e : sorted) {
    if (e->has_bbox) {
      bbox_by_class[static_cast<std::size_t>(e->label)].push_back(e->id);
    } else {
      unannotated.push_back(e->id);
    }
  }

  std::vector<std::size_t> cap_a(static_cast<std::size_t>(num_classes));
  std::vector<std::size_t> cap_b(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const std::size_t n = bbox_by_class[static_cast<std::size_t>(c)].size();
    cap_a[static_cast<std::size_t>(c)] = (n + 1) / 2;
    cap_b[static_cast<std::size_t>(c)] = n / 2;
  }
  auto quota_a = split_internal::WaterFill(cap_a, sizes.a);
  auto quota_b = split_internal::WaterFill(cap_b, sizes.b);
  if (!quota_a || !quota_b) {
    throw Error(ErrorCode::kInfeasibleSplit,
                "not enough bounding-box examples for |A|=" + std::to_string(sizes.a) +
                    ", |B|=" + std::to_string(sizes.b));
  }
  if (sizes.x > unannotated.size()) {
    throw Error(ErrorCode::kInfeasibleSplit,
                "|X|=" + std::to_string(sizes.x) + " exceeds the " +
                    std::to_string(unannotated.size()) + " unannotated examples");
  }

  std::mt19937_64 rng(seed);
  for (int c = 0; c < num_classes; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const std::size_t qa = (*quota_a)[ci];
    const std::size_t qb = (*quota_b)[ci];
    if ((qa > qb ? qa - qb : qb - qa) > 1) {
      throw Error(ErrorCode::kInfeasibleSplit,
                  "class " + std::to_string(c) + " cannot be balanced between A (" +
                      std::to_string(qa) + ") and B (" + std::to_string(qb) + ")");
    }
    auto& pool = bbox_by_class[ci];
    std::shuffle(pool.begin(), pool.end(), rng);
    // Alternate A, B, A, B, ...; an odd remainder falls to A.
    std::size_t taken_a = 0;
    std::size_t taken_b = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (i % 2 == 0 && taken_a < qa) {
        plan.set_a.push_back(pool[i]);
        ++taken_a;
      } else if (i % 2 == 1 && taken_b < qb) {
        plan.set_b.push_back(pool[i]);
        ++taken_b;
      }
    }
    plan.per_class_counts[c] = ClassSplitCounts{taken_a, taken_b, 0, 0};
  }

  std::shuffle(unannotated.begin(), unannotated.end(), rng);
  plan.set_x.assign(unannotated.begin(), unannotated.begin() + static_cast<std::ptrdiff_t>(sizes.x));
  plan.set_c.assign(unannotated.begin() + static_cast<std::ptrdiff_t>(sizes.x), unannotated.end());

  std::unordered_map<std::string, int> label_lookup;
  label_lookup.reserve(catalog.entries.size());
  for (const auto& e : catalog.entries) label_lookup.emplace(e.id, e.label);

  if (sizes.augment_to) {
    std::vector<std::vector<std::string>> c_by_class(static_cast<std::size_t>(num_classes));
    std::vector<std::string> c_sorted = plan.set_c;
    std::sort(c_sorted.begin(), c_sorted.end());
    for (const auto& id : c_sorted) {
      c_by_class[static_cast<std::size_t>(label_lookup.at(id))].push_back(id);
    }
    std::vector<std::size_t> unlimited(static_cast<std::size_t>(num_classes), *sizes.augment_to);
    auto per_class = split_internal::WaterFill(unlimited, *sizes.augment_to);
    for (int c = 0; c < num_classes; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      auto& counts = plan.per_class_counts[c];
      const std::size_t want = (*per_class)[ci];
      if (counts.a > want || counts.b > want) {
        throw Error(ErrorCode::kInfeasibleSplit,
                    "class " + std::to_string(c) +
                        " already exceeds its augmented training share");
      }
      counts.aug_a = want - counts.a;
      counts.aug_b = want - counts.b;
      const auto& pool = c_by_class[ci];
      if (pool.size() < std::max(counts.aug_a, counts.aug_b)) {
        throw Error(ErrorCode::kInfeasibleSplit,
                    "set C lacks examples of class " + std::to_string(c) + " for augmentation");
      }
      // Independent draws without replacement for each model.
      for (auto [count, out] : {std::pair{counts.aug_a, &plan.aug_a},
                                std::pair{counts.aug_b, &plan.aug_b}}) {
        std::vector<std::string> draw = pool;
        std::shuffle(draw.begin(), draw.end(), rng);
        out->insert(out->end(), draw.begin(), draw.begin() + static_cast<std::ptrdiff_t>(count));
      }
    }
  }

  for (auto* v : {&plan.set_a, &plan.set_b, &plan.set_x, &plan.set_c, &plan.aug_a, &plan.aug_b}) {
    std::sort(v->begin(), v->end());
  }
  for (const auto* v : {&plan.set_a, &plan.set_b, &plan.set_x, &plan.set_c}) {
    for (const auto& id : *v) plan.label_of[id] = label_lookup.at(id);
  }
  return plan;
}

enum class ViolationKind {
  kUnknownId,
  kDuplicateInSet,
  kDisjointness,
  kBboxMembership,
  kClassBalance,
  kAugmentSource,
};

inline std::string_view ViolationKindName(ViolationKind k) {
  switch (k) {
    case ViolationKind::kUnknownId: return "UnknownId";
    case ViolationKind::kDuplicateInSet: return "DuplicateInSet";
    case ViolationKind::kDisjointness: return "DisjointnessViolation";
    case ViolationKind::kBboxMembership: return "BboxMembershipViolation";
    case ViolationKind::kClassBalance: return "ClassBalanceViolation";
    case ViolationKind::kAugmentSource: return "AugmentSourceViolation";
  }
  return "Unknown";
}

struct Violation {
  ViolationKind kind;
  std::string detail;
  std::vector<std::string> ids;
};

// Returns an empty list iff every plan invariant holds against the catalog.
inline std::vector<Violation> VerifyPlan(const SplitPlan& plan, const ExampleCatalog& catalog) {
  std::vector<Violation> out;
  std::unordered_map<std::string, const CatalogEntry*> by_id;
  for (const auto& e : catalog.entries) by_id.emplace(e.id, &e);

  struct Named {
    const char* name;
    const std::vector<std::string>* ids;
  };
  const Named sets[] = {{"A", &plan.set_a}, {"B", &plan.set_b}, {"X", &plan.set_x},
                        {"C", &plan.set_c}, {"A_aug", &plan.aug_a}, {"B_aug", &plan.aug_b}};
  std::map<std::string, std::set<std::string>> members;
  for (const auto& s : sets) {
    auto& m = members[s.name];
    std::vector<std::string> unknown;
    std::vector<std::string> dup;
    for (const auto& id : *s.ids) {
      if (!by_id.count(id)) unknown.push_back(id);
      if (!m.insert(id).second) dup.push_back(id);
    }
    if (!unknown.empty()) {
      out.push_back({ViolationKind::kUnknownId, std::string("set ") + s.name, unknown});
    }
    if (!dup.empty()) {
      out.push_back({ViolationKind::kDuplicateInSet, std::string("set ") + s.name, dup});
    }
  }

  auto check_disjoint = [&](const char* l, const char* r) {
    std::vector<std::string> both;
    std::set_intersection(members[l].begin(), members[l].end(), members[r].begin(),
                          members[r].end(), std::back_inserter(both));
    if (!both.empty()) {
      out.push_back({ViolationKind::kDisjointness, std::string(l) + " and " + r, both});
    }
  };
  check_disjoint("A", "B");
  check_disjoint("A", "X");
  check_disjoint("B", "X");
  check_disjoint("A", "C");
  check_disjoint("B", "C");
  check_disjoint("X", "C");

  auto check_bbox = [&](const char* name, bool want_bbox) {
    std::vector<std::string> bad;
    for (const auto& id : members[name]) {
      auto it = by_id.find(id);
      if (it != by_id.end() && it->second->has_bbox != want_bbox) bad.push_back(id);
    }
    if (!bad.empty()) {
      out.push_back({ViolationKind::kBboxMembership,
                     std::string("set ") + name +
                         (want_bbox ? " must hold annotated examples"
                                    : " must hold unannotated examples"),
                     bad});
    }
  };
  check_bbox("A", true);
  check_bbox("B", true);
  check_bbox("X", false);
  check_bbox("C", false);

  std::map<int, std::pair<std::size_t, std::size_t>> per_class;
  for (const auto& id : members["A"]) {
    if (auto it = by_id.find(id); it != by_id.end()) ++per_class[it->second->label].first;
  }
  for (const auto& id : members["B"]) {
    if (auto it = by_id.find(id); it != by_id.end()) ++per_class[it->second->label].second;
  }
  for (const auto& [label, counts] : per_class) {
    const auto [a, b] = counts;
    if ((a > b ? a - b : b - a) > 1) {
      out.push_back({ViolationKind::kClassBalance,
                     "class " + std::to_string(label) + ": A has " + std::to_string(a) +
                         ", B has " + std::to_string(b),
                     {}});
    }
  }

  for (const char* aug : {"A_aug", "B_aug"}) {
    std::vector<std::string> bad;
    for (const auto& id : members[aug]) {
      if (!members["C"].count(id)) bad.push_back(id);
    }
    if (!bad.empty()) {
      out.push_back({ViolationKind::kAugmentSource,
                     std::string(aug) + " must be drawn from C", bad});
    }
  }
  return out;
}

// Catalog text format: example_id<TAB>class<TAB>has_bbox(0|1). Lines starting
// with '#' are comments.
inline ExampleCatalog ReadCatalog(std::istream& in) {
  ExampleCatalog catalog;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto fields = text_io::SplitTabs(line);
    if (fields.size() != 3) {
      throw Error(ErrorCode::kParseError,
                  "catalog line " + std::to_string(line_no) + ": expected 3 fields");
    }
    CatalogEntry e;
    e.id = fields[0];
    e.label = text_io::ParseInt(fields[1], "catalog line " + std::to_string(line_no));
    const int flag = text_io::ParseInt(fields[2], "catalog line " + std::to_string(line_no));
    if (flag != 0 && flag != 1) {
      throw Error(ErrorCode::kParseError,
                  "catalog line " + std::to_string(line_no) + ": has_bbox must be 0 or 1");
    }
    e.has_bbox = flag == 1;
    catalog.entries.push_back(std::move(e));
  }
  return catalog;
}

inline ExampleCatalog ReadCatalogFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open catalog '" + path + "'");
  return ReadCatalog(in);
}

// Manifest: '#'-prefixed header lines carrying seed and sizes, then one
// example_id<TAB>set<TAB>class line per membership.
inline void WriteSplitManifest(const SplitPlan& plan, std::ostream& out) {
  out << "# dejavu-split v1\n";
  out << "# seed=" << plan.seed << "\n";
  out << "# sizes=" << plan.sizes.a << "," << plan.sizes.b << "," << plan.sizes.x << "\n";
  if (plan.sizes.augment_to) out << "# augment_to=" << *plan.sizes.augment_to << "\n";
  auto emit = [&](const std::vector<std::string>& ids, const char* name) {
    for (const auto& id : ids) out << id << '\t' << name << '\t' << plan.label_of.at(id) << '\n';
  };
  emit(plan.set_a, "A");
  emit(plan.set_b, "B");
  emit(plan.set_x, "X");
  emit(plan.set_c, "C");
  emit(plan.aug_a, "A_aug");
  emit(plan.aug_b, "B_aug");
}

inline SplitPlan ReadSplitManifest(std::istream& in) {
  SplitPlan plan;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    if (line[0] == '#') {
      if (line.rfind("# seed=", 0) == 0) {
        plan.seed = std::stoull(line.substr(7));
      } else if (line.rfind("# sizes=", 0) == 0) {
        auto parts = text_io::SplitOn(line.substr(8), ',');
        if (parts.size() != 3) throw Error(ErrorCode::kParseError, where + ": bad sizes");
        plan.sizes.a = text_io::ParseSize(parts[0], where);
        plan.sizes.b = text_io::ParseSize(parts[1], where);
        plan.sizes.x = text_io::ParseSize(parts[2], where);
      } else if (line.rfind("# augment_to=", 0) == 0) {
        plan.sizes.augment_to = text_io::ParseSize(line.substr(13), where);
      }
      continue;
    }
    auto fields = text_io::SplitTabs(line);
    if (fields.size() != 3) throw Error(ErrorCode::kParseError, where + ": expected 3 fields");
    const int label = text_io::ParseInt(fields[2], where);
    const std::string& set = fields[1];
    std::vector<std::string>* dst = nullptr;
    if (set == "A") dst = &plan.set_a;
    else if (set == "B") dst = &plan.set_b;
    else if (set == "X") dst = &plan.set_x;
    else if (set == "C") dst = &plan.set_c;
    else if (set == "A_aug") dst = &plan.aug_a;
    else if (set == "B_aug") dst = &plan.aug_b;
    else throw Error(ErrorCode::kParseError, where + ": unknown set '" + set + "'");
    dst->push_back(fields[0]);
    plan.label_of[fields[0]] = label;
  }
  for (const auto& id : plan.set_a) ++plan.per_class_counts[plan.label_of[id]].a;
  for (const auto& id : plan.set_b) ++plan.per_class_counts[plan.label_of[id]].b;
  for (const auto& id : plan.aug_a) ++plan.per_class_counts[plan.label_of[id]].aug_a;
  for (const auto& id : plan.aug_b) ++plan.per_class_counts[plan.label_of[id]].aug_b;
  return plan;
}

inline SplitPlan ReadSplitManifestFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open split manifest '" + path + "'");
  return ReadSplitManifest(in);
}

}  // namespace dejavu

#endif  // DEJAVU_SPLIT_PROTOCOL_HPP_
