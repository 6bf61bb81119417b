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

// Population- and sample-level memorization metrics computed from paired
// target/reference inference records.

#ifndef DEJAVU_METRICS_HPP_
#define DEJAVU_METRICS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <tuple>
#include <vector>

#include "dejavu/error.hpp"
#include "dejavu/knn.hpp"

namespace dejavu {

inline constexpr double kDefaultPercentile = 20.0;

inline std::vector<double> DefaultPercentiles() {
  return {1, 2, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
}

struct CurvePoint {
  double percentile = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
};

struct ConfidenceCurve {
  std::vector<CurvePoint> points;  // ascending percentile

  std::optional<double> AccuracyAt(double p) const {
    for (const auto& pt : points) {
      if (pt.percentile == p) return pt.accuracy;
    }
    return std::nullopt;
  }
  std::vector<double> Percentiles() const {
    std::vector<double> out;
    for (const auto& pt : points) out.push_back(pt.percentile);
    return out;
  }
};

// ceil(p * n / 100), guarded against floating-point overshoot on exact
// products such as 20 * 500 / 100.
inline std::size_t TopCount(double p, std::size_t n) {
  const double raw = p * static_cast<double>(n) / 100.0;
  const double nearest = std::round(raw);
  double c = std::abs(raw - nearest) <= 1e-9 * std::max(1.0, raw) ? nearest : std::ceil(raw);
  c = std::clamp(c, 1.0, static_cast<double>(n));
  return static_cast<std::size_t>(c);
}

// Record indices ordered by decreasing confidence, ties by example id.
inline std::vector<std::size_t> ConfidenceOrder(const std::vector<InferenceRecord>& records) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].confidence != records[b].confidence) {
      return records[a].confidence > records[b].confidence;
    }
    return records[a].example_id < records[b].example_id;
  });
  return order;
}

inline ConfidenceCurve ComputeConfidenceCurve(const std::vector<InferenceRecord>& records,
                                              std::vector<double> percentiles) {
  if (records.empty()) throw Error(ErrorCode::kEmptyRecords, "no inference records");
  std::sort(percentiles.begin(), percentiles.end());
  percentiles.erase(std::unique(percentiles.begin(), percentiles.end()), percentiles.end());
  const auto order = ConfidenceOrder(records);
  // prefix[i] = correct predictions among the i most confident records.
  std::vector<std::size_t> prefix(order.size() + 1, 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    prefix[i + 1] = prefix[i] + (records[order[i]].correct() ? 1 : 0);
  }
  ConfidenceCurve curve;
  for (double p : percentiles) {
    if (!(p > 0.0 && p <= 100.0)) {
      throw Error(ErrorCode::kInvalidArgument, "percentile must lie in (0, 100]");
    }
    const std::size_t n = TopCount(p, records.size());
    curve.points.push_back({p, n, static_cast<double>(prefix[n]) / static_cast<double>(n)});
  }
  return curve;
}

namespace metrics_internal {

inline void RequireAligned(const std::vector<InferenceRecord>& target,
                           const std::vector<InferenceRecord>& reference) {
  if (target.size() != reference.size()) {
    throw Error(ErrorCode::kMisalignedRecords,
                "target has " + std::to_string(target.size()) + " records, reference has " +
                    std::to_string(reference.size()));
  }
  std::vector<std::string> a;
  std::vector<std::string> b;
  for (const auto& r : target) a.push_back(r.example_id);
  for (const auto& r : reference) b.push_back(r.example_id);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw Error(ErrorCode::kMisalignedRecords, "record id sets differ");
  if (std::adjacent_find(a.begin(), a.end()) != a.end()) {
    throw Error(ErrorCode::kMisalignedRecords, "duplicate example id in records");
  }
}

// (target record, reference record) pairs in ascending id order.
inline std::vector<std::pair<const InferenceRecord*, const InferenceRecord*>> Pair(
    const std::vector<InferenceRecord>& target, const std::vector<InferenceRecord>& reference) {
  RequireAligned(target, reference);
  std::unordered_map<std::string, const InferenceRecord*> ref;
  ref.reserve(reference.size());
  for (const auto& r : reference) ref.emplace(r.example_id, &r);
  std::vector<std::pair<const InferenceRecord*, const InferenceRecord*>> out;
  out.reserve(target.size());
  for (const auto& t : target) out.emplace_back(&t, ref.at(t.example_id));
  std::sort(out.begin(), out.end(),
            [](const auto& l, const auto& r) { return l.first->example_id < r.first->example_id; });
  return out;
}

}  // namespace metrics_internal

// Each model selects its own top-p% most confident records; the score is the
// difference of their accuracies.
inline double DejaVuScore(const std::vector<InferenceRecord>& target,
                          const std::vector<InferenceRecord>& reference, double p) {
  metrics_internal::RequireAligned(target, reference);
  const double t = *ComputeConfidenceCurve(target, {p}).AccuracyAt(p);
  const double r = *ComputeConfidenceCurve(reference, {p}).AccuracyAt(p);
  return t - r;
}

enum class Category { kUnassociated = 0, kMemorized = 1, kMisrepresented = 2, kCorrelated = 3 };

inline Category Classify(bool target_correct, bool reference_correct) {
  if (target_correct && reference_correct) return Category::kCorrelated;
  if (target_correct) return Category::kMemorized;
  if (reference_correct) return Category::kMisrepresented;
  return Category::kUnassociated;
}

struct PartitionCounts {
  std::size_t unassociated = 0;
  std::size_t memorized = 0;
  std::size_t misrepresented = 0;
  std::size_t correlated = 0;
  std::size_t total = 0;

  // {unassociated, memorized, misrepresented, correlated} as fractions of total.
  std::array<double, 4> Shares() const {
    if (total == 0) return {0, 0, 0, 0};
    const double n = static_cast<double>(total);
    return {unassociated / n, memorized / n, misrepresented / n, correlated / n};
  }
  friend bool operator==(const PartitionCounts&, const PartitionCounts&) = default;
};

inline PartitionCounts Partition(const std::vector<InferenceRecord>& target,
                                 const std::vector<InferenceRecord>& reference) {
  PartitionCounts counts;
  for (const auto& [t, r] : metrics_internal::Pair(target, reference)) {
    switch (Classify(t->correct(), r->correct())) {
      case Category::kUnassociated: ++counts.unassociated; break;
      case Category::kMemorized: ++counts.memorized; break;
      case Category::kMisrepresented: ++counts.misrepresented; break;
      case Category::kCorrelated: ++counts.correlated; break;
    }
    ++counts.total;
  }
  return counts;
}

struct ScoreAt {
  double percentile = 0.0;
  double score = 0.0;
};

struct LinearProbeSummary {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double gap = 0.0;
};

struct ReportMetadata {
  std::string target_tag;
  std::string reference_tag;
  std::size_t k = 0;
  std::uint64_t split_seed = 0;
  // Number of directional reports averaged into this one.
  int averaged_over = 1;
};

struct DejaVuReport {
  ConfidenceCurve curve_target;
  ConfidenceCurve curve_reference;
  std::vector<ScoreAt> score_at_p;
  PartitionCounts partition;
  // Mean shares across averaged reports; equal to partition.Shares() for a
  // single direction.
  std::array<double, 4> partition_shares{};
  double p_default = kDefaultPercentile;
  ReportMetadata metadata;
  std::optional<LinearProbeSummary> linear_probe;

  std::optional<double> ScoreAtPercentile(double p) const {
    for (const auto& s : score_at_p) {
      if (s.percentile == p) return s.score;
    }
    return std::nullopt;
  }
  double DefaultScore() const { return ScoreAtPercentile(p_default).value_or(0.0); }
};

inline DejaVuReport BuildReport(const std::vector<InferenceRecord>& target,
                                const std::vector<InferenceRecord>& reference,
                                std::vector<double> percentiles, ReportMetadata metadata,
                                double p_default = kDefaultPercentile) {
  metrics_internal::RequireAligned(target, reference);
  if (std::find(percentiles.begin(), percentiles.end(), p_default) == percentiles.end()) {
    percentiles.push_back(p_default);
  }
  DejaVuReport report;
  report.curve_target = ComputeConfidenceCurve(target, percentiles);
  report.curve_reference = ComputeConfidenceCurve(reference, percentiles);
  for (std::size_t i = 0; i < report.curve_target.points.size(); ++i) {
    report.score_at_p.push_back({report.curve_target.points[i].percentile,
                                 report.curve_target.points[i].accuracy -
                                     report.curve_reference.points[i].accuracy});
  }
  report.partition = Partition(target, reference);
  report.partition_shares = report.partition.Shares();
  report.p_default = p_default;
  report.metadata = std::move(metadata);
  return report;
}

// Element-wise mean of two directional reports (A as target, then B as
// target). Counts are summed; curves, scores and shares are averaged.
inline DejaVuReport RoleSwapAverage(const DejaVuReport& ab, const DejaVuReport& ba) {
  if (ab.metadata.k != ba.metadata.k) {
    throw Error(ErrorCode::kIncompatibleReports, "reports use different k");
  }
  if (ab.curve_target.Percentiles() != ba.curve_target.Percentiles() ||
      ab.curve_reference.Percentiles() != ba.curve_reference.Percentiles() ||
      ab.score_at_p.size() != ba.score_at_p.size() || ab.p_default != ba.p_default) {
    throw Error(ErrorCode::kIncompatibleReports, "reports use different percentiles");
  }
  auto mean = [](double a, double b) { return (a + b) / 2.0; };
  auto mean_curve = [&](const ConfidenceCurve& x, const ConfidenceCurve& y) {
    ConfidenceCurve out = x;
    for (std::size_t i = 0; i < out.points.size(); ++i) {
      out.points[i].accuracy = mean(x.points[i].accuracy, y.points[i].accuracy);
      out.points[i].count = x.points[i].count + y.points[i].count;
    }
    return out;
  };
  DejaVuReport out;
  out.curve_target = mean_curve(ab.curve_target, ba.curve_target);
  out.curve_reference = mean_curve(ab.curve_reference, ba.curve_reference);
  for (std::size_t i = 0; i < ab.score_at_p.size(); ++i) {
    out.score_at_p.push_back(
        {ab.score_at_p[i].percentile, mean(ab.score_at_p[i].score, ba.score_at_p[i].score)});
  }
  out.partition.unassociated = ab.partition.unassociated + ba.partition.unassociated;
  out.partition.memorized = ab.partition.memorized + ba.partition.memorized;
  out.partition.misrepresented = ab.partition.misrepresented + ba.partition.misrepresented;
  out.partition.correlated = ab.partition.correlated + ba.partition.correlated;
  out.partition.total = ab.partition.total + ba.partition.total;
  for (std::size_t i = 0; i < 4; ++i) {
    out.partition_shares[i] = mean(ab.partition_shares[i], ba.partition_shares[i]);
  }
  out.p_default = ab.p_default;
  // Order-independent metadata so that the mean is commutative.
  const bool ab_first = std::tie(ab.metadata.target_tag, ab.metadata.reference_tag) <=
                        std::tie(ba.metadata.target_tag, ba.metadata.reference_tag);
  out.metadata = ab_first ? ab.metadata : ba.metadata;
  out.metadata.averaged_over = ab.metadata.averaged_over + ba.metadata.averaged_over;
  if (ab.linear_probe && ba.linear_probe) {
    out.linear_probe = LinearProbeSummary{
        mean(ab.linear_probe->train_accuracy, ba.linear_probe->train_accuracy),
        mean(ab.linear_probe->test_accuracy, ba.linear_probe->test_accuracy),
        mean(ab.linear_probe->gap, ba.linear_probe->gap)};
  }
  return out;
}

struct Selection {
  std::vector<std::string> ids;
  // Set when fewer than the requested number of examples qualified.
  bool truncated = false;
};

namespace metrics_internal {

template <typename Pred, typename Key>
Selection SelectTop(const std::vector<InferenceRecord>& target,
                    const std::vector<InferenceRecord>& reference, std::size_t n, Pred keep,
                    Key key) {
  std::vector<std::pair<double, const std::string*>> ranked;
  for (const auto& [t, r] : Pair(target, reference)) {
    if (keep(*t, *r)) ranked.emplace_back(key(*t, *r), &t->example_id);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });
  Selection out;
  out.truncated = ranked.size() < n;
  for (std::size_t i = 0; i < std::min(n, ranked.size()); ++i) out.ids.push_back(*ranked[i].second);
  return out;
}

}  // namespace metrics_internal

// Memorized examples ranked by target confidence minus reference confidence.
inline Selection SelectMostMemorized(const std::vector<InferenceRecord>& target,
                                     const std::vector<InferenceRecord>& reference,
                                     std::size_t n) {
  return metrics_internal::SelectTop(
      target, reference, n,
      [](const InferenceRecord& t, const InferenceRecord& r) {
        return Classify(t.correct(), r.correct()) == Category::kMemorized;
      },
      [](const InferenceRecord& t, const InferenceRecord& r) { return t.confidence - r.confidence; });
}

// Correlated examples ranked by the smaller of the two confidences.
inline Selection SelectMostCorrelated(const std::vector<InferenceRecord>& target,
                                      const std::vector<InferenceRecord>& reference,
                                      std::size_t n) {
  return metrics_internal::SelectTop(
      target, reference, n,
      [](const InferenceRecord& t, const InferenceRecord& r) {
        return Classify(t.correct(), r.correct()) == Category::kCorrelated;
      },
      [](const InferenceRecord& t, const InferenceRecord& r) {
        return std::min(t.confidence, r.confidence);
      });
}

struct PanelEntry {
  std::string id;
  int label = 0;
  double squared_distance = 0.0;
};

// First m neighbors of a record with their public-set labels.
inline std::vector<PanelEntry> NeighborPanel(const InferenceRecord& record,
                                             const KnnIndex& index, std::size_t m) {
  if (m > record.neighbor_rows.size()) {
    throw Error(ErrorCode::kInvalidArgument, "panel size exceeds the record's k");
  }
  std::vector<PanelEntry> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t row = record.neighbor_rows[i];
    out.push_back({index.data().ids[row], index.label(row), record.neighbor_distances[i]});
  }
  return out;
}

}  // namespace dejavu

#endif  // DEJAVU_METRICS_HPP_
