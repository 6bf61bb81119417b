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

// Exact L2 k-nearest-neighbor search over a labeled public set, and the KNN
// label inference built on it: class-probability vectors (normalized neighbor
// label counts), majority vote, and negative-entropy confidence.

#ifndef DEJAVU_KNN_HPP_
#define DEJAVU_KNN_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dejavu/embedding_store.hpp"
#include "dejavu/error.hpp"

namespace dejavu {

// Worker count for parallel fan-out: DEJAVU_THREADS if set, else hardware
// concurrency.
inline int DefaultThreadCount() {
  if (const char* env = std::getenv("DEJAVU_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) across `threads` workers with a static
// round-robin partition. Each index is handled by exactly one worker.
template <typename Fn>
void ParallelFor(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
}

class KnnIndex {
 public:
  static KnnIndex Build(EmbeddingSet public_set, bool normalize = false) {
    if (public_set.size() == 0) {
      throw Error(ErrorCode::kInvalidArgument, "public set is empty");
    }
    if (!public_set.fully_labeled()) {
      throw Error(ErrorCode::kUnlabeledPublicSet, "every public-set row needs a class label");
    }
    KnnIndex index;
    index.normalized_ = normalize;
    if (normalize) NormalizeRows(public_set.rows);
    index.set_ = std::move(public_set);
    index.norms_.resize(index.set_.size());
    for (std::size_t i = 0; i < index.norms_.size(); ++i) {
      index.norms_[i] = SquaredNorm(index.Row(i));
    }
    int max_label = 0;
    for (auto l : index.set_.labels) max_label = std::max(max_label, static_cast<int>(l));
    index.num_classes_ = max_label + 1;
    return index;
  }

  const EmbeddingSet& data() const { return set_; }
  const std::vector<double>& squared_norms() const { return norms_; }
  bool normalized() const { return normalized_; }
  int num_classes() const { return num_classes_; }
  int dim() const { return set_.dim(); }
  std::size_t size() const { return set_.size(); }
  int label(std::size_t row) const { return set_.labels[row]; }

  std::span<const float> Row(std::size_t i) const {
    return {set_.rows.data() + i * static_cast<std::size_t>(set_.dim()),
            static_cast<std::size_t>(set_.dim())};
  }

  static double SquaredNorm(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return s;
  }

  static void NormalizeRows(Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const float n = m.row(r).norm();
      if (n > 0.0f) m.row(r) /= n;
    }
  }

 private:
  EmbeddingSet set_;
  std::vector<double> norms_;
  bool normalized_ = false;
  int num_classes_ = 0;
};

struct Neighbor {
  std::size_t row = 0;
  double squared_distance = 0.0;
};

// Sorted ascending by distance, then by row index.
using NeighborList = std::vector<Neighbor>;

// Squared L2 distance accumulated in double, coordinate order.
inline double ExactSquaredDistance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

namespace knn_internal {

inline constexpr Eigen::Index kQueryBlock = 64;

// Selects the exact k nearest rows for one query given float-GEMM estimates
// of ||q||^2 - 2 q.x + ||x||^2. Each estimate is within `margin` of the exact
// value, so any row whose lower bound exceeds the k-th smallest upper bound
// cannot be among the k nearest; the survivors are re-ranked exactly.
inline NeighborList SelectExact(const KnnIndex& index, std::span<const float> q,
                                double q_norm2, const float* dots, std::size_t k,
                                std::vector<double>& approx, std::vector<double>& upper) {
  const std::size_t n = index.size();
  const auto& norms = index.squared_norms();
  const double unit = std::numeric_limits<float>::epsilon();
  const double slack = 2.0 * (static_cast<double>(index.dim()) + 2.0) * unit;
  const double q_norm = std::sqrt(q_norm2);
  approx.resize(n);
  upper.resize(n);
  std::vector<double> margin(n);
  for (std::size_t i = 0; i < n; ++i) {
    approx[i] = q_norm2 + norms[i] - 2.0 * static_cast<double>(dots[i]);
    const double s = q_norm + std::sqrt(norms[i]);
    margin[i] = slack * s * s;
    upper[i] = approx[i] + margin[i];
  }
  std::vector<double> kth(upper);
  std::nth_element(kth.begin(), kth.begin() + static_cast<std::ptrdiff_t>(k - 1), kth.end());
  const double bound = kth[k - 1];

  NeighborList candidates;
  for (std::size_t i = 0; i < n; ++i) {
    if (approx[i] - margin[i] <= bound) {
      candidates.push_back({i, ExactSquaredDistance(q, index.Row(i))});
    }
  }
  auto before = [](const Neighbor& a, const Neighbor& b) {
    return a.squared_distance < b.squared_distance ||
           (a.squared_distance == b.squared_distance && a.row < b.row);
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), before);
  candidates.resize(k);
  return candidates;
}

}  // namespace knn_internal

// One neighbor list per query row. Query blocks are distributed over
// `threads` workers; output order always follows query order.
inline std::vector<NeighborList> QueryBatch(const KnnIndex& index, const Matrix& queries,
                                            std::size_t k, int threads = 0) {
  if (queries.cols() != index.dim()) {
    throw Error(ErrorCode::kDimMismatch, "query dim " + std::to_string(queries.cols()) +
                                             " != index dim " + std::to_string(index.dim()));
  }
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (k > index.size()) {
    throw Error(ErrorCode::kKTooLarge, "k=" + std::to_string(k) + " exceeds public set size " +
                                           std::to_string(index.size()));
  }
  if (threads <= 0) threads = DefaultThreadCount();
  Matrix normalized;
  const Matrix* q = &queries;
  if (index.normalized()) {
    normalized = queries;
    KnnIndex::NormalizeRows(normalized);
    q = &normalized;
  }
  const Eigen::Index nq = q->rows();
  std::vector<NeighborList> out(static_cast<std::size_t>(nq));
  const std::size_t blocks =
      static_cast<std::size_t>((nq + knn_internal::kQueryBlock - 1) / knn_internal::kQueryBlock);
  const auto& base = index.data().rows;
  const auto dim = static_cast<std::size_t>(index.dim());
  ParallelFor(blocks, threads, [&](std::size_t b) {
    const Eigen::Index start = static_cast<Eigen::Index>(b) * knn_internal::kQueryBlock;
    const Eigen::Index rows = std::min(knn_internal::kQueryBlock, nq - start);
    Matrix dots = q->middleRows(start, rows) * base.transpose();
    std::vector<double> approx;
    std::vector<double> upper;
    for (Eigen::Index r = 0; r < rows; ++r) {
      std::span<const float> qrow(q->data() + static_cast<std::size_t>(start + r) * dim, dim);
      out[static_cast<std::size_t>(start + r)] = knn_internal::SelectExact(
          index, qrow, KnnIndex::SquaredNorm(qrow), dots.data() + static_cast<std::size_t>(r) * index.size(),
          k, approx, upper);
    }
  });
  return out;
}

inline NeighborList Query(const KnnIndex& index, std::span<const float> q, std::size_t k) {
  if (q.size() != static_cast<std::size_t>(index.dim())) {
    throw Error(ErrorCode::kDimMismatch, "query dim " + std::to_string(q.size()) +
                                             " != index dim " + std::to_string(index.dim()));
  }
  Matrix m = Eigen::Map<const Matrix>(q.data(), 1, static_cast<Eigen::Index>(q.size()));
  return std::move(QueryBatch(index, m, k, 1).front());
}

struct InferenceRecord {
  std::string example_id;
  int true_label = kUnlabeled;
  int predicted_label = 0;
  std::vector<double> probs;
  double confidence = 0.0;
  std::vector<std::string> neighbor_ids;
  std::vector<std::size_t> neighbor_rows;
  std::vector<double> neighbor_distances;

  bool correct() const { return predicted_label == true_label; }
};

// sum_c p_c ln p_c with 0 ln 0 = 0; lies in [-ln C, 0].
inline double NegativeEntropy(std::span<const double> probs) {
  double s = 0.0;
  for (double p : probs) {
    if (p > 0.0) s += p * std::log(p);
  }
  return s;
}

// Majority vote over the first k neighbors. Tied classes are resolved by the
// smallest summed neighbor distance, then by the smallest class index.
inline InferenceRecord RecordFromNeighbors(const KnnIndex& index, std::string example_id,
                                           int true_label, const NeighborList& neighbors,
                                           std::size_t k, int num_classes) {
  InferenceRecord rec;
  rec.example_id = std::move(example_id);
  rec.true_label = true_label;
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  std::vector<double> summed(static_cast<std::size_t>(num_classes), 0.0);
  rec.neighbor_ids.reserve(k);
  rec.neighbor_rows.reserve(k);
  rec.neighbor_distances.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& nb = neighbors[i];
    const auto c = static_cast<std::size_t>(index.label(nb.row));
    ++counts[c];
    summed[c] += nb.squared_distance;
    rec.neighbor_ids.push_back(index.data().ids[nb.row]);
    rec.neighbor_rows.push_back(nb.row);
    rec.neighbor_distances.push_back(nb.squared_distance);
  }
  rec.probs.resize(static_cast<std::size_t>(num_classes));
  std::size_t best = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    rec.probs[c] = static_cast<double>(counts[c]) / static_cast<double>(k);
    if (counts[c] > counts[best] || (counts[c] == counts[best] && summed[c] < summed[best])) {
      best = c;
    }
  }
  rec.predicted_label = static_cast<int>(best);
  rec.confidence = NegativeEntropy(rec.probs);
  return rec;
}

inline int ClassCount(const KnnIndex& index, const EmbeddingSet& queries) {
  int c = index.num_classes();
  for (auto l : queries.labels) c = std::max(c, static_cast<int>(l) + 1);
  return c;
}

inline std::vector<InferenceRecord> Infer(const KnnIndex& index, const EmbeddingSet& queries,
                                          std::size_t k, int threads = 0) {
  if (!queries.has_labels()) {
    throw Error(ErrorCode::kInvalidArgument, "queries must carry true labels");
  }
  const auto lists = QueryBatch(index, queries.rows, k, threads);
  const int num_classes = ClassCount(index, queries);
  std::vector<InferenceRecord> out;
  out.reserve(lists.size());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    out.push_back(RecordFromNeighbors(index, queries.ids[i], queries.labels[i], lists[i], k,
                                      num_classes));
  }
  return out;
}

struct KAccuracy {
  std::size_t k = 0;
  double accuracy = 0.0;
};

// Top-1 accuracy for each k. The neighbor search runs once at max(k); the
// k-list is a prefix of it under the (distance, row) order.
inline std::vector<KAccuracy> SweepK(const KnnIndex& index, const EmbeddingSet& queries,
                                     const std::vector<std::size_t>& k_values, int threads = 0) {
  if (k_values.empty()) return {};
  if (!queries.has_labels()) {
    throw Error(ErrorCode::kInvalidArgument, "queries must carry true labels");
  }
  const std::size_t k_max = *std::max_element(k_values.begin(), k_values.end());
  const auto lists = QueryBatch(index, queries.rows, k_max, threads);
  const int num_classes = ClassCount(index, queries);
  std::vector<KAccuracy> out;
  for (std::size_t k : k_values) {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < lists.size(); ++i) {
      correct += RecordFromNeighbors(index, queries.ids[i], queries.labels[i], lists[i], k,
                                     num_classes)
                     .correct();
    }
    out.push_back({k, lists.empty() ? 0.0
                                    : static_cast<double>(correct) / static_cast<double>(lists.size())});
  }
  return out;
}

}  // namespace dejavu

#endif  // DEJAVU_KNN_HPP_
