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

// Linear probe: multinomial logistic regression on frozen embeddings, trained
// by seeded mini-batch gradient descent with L2 regularization and a
// cosine-decayed step size.

#ifndef DEJAVU_LINEAR_PROBE_HPP_
#define DEJAVU_LINEAR_PROBE_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "dejavu/embedding_store.hpp"
#include "dejavu/error.hpp"

namespace dejavu {

struct ProbeConfig {
  int epochs = 50;
  double step_size = 0.1;
  double l2 = 1e-4;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

struct ProbeModel {
  Eigen::MatrixXd weights;  // C x dim
  Eigen::VectorXd bias;     // C
  ProbeConfig config;
  double initial_loss = 0.0;
  double final_loss = 0.0;

  int num_classes() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }
};

struct ProbeGradient {
  double loss = 0.0;
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

// Row-wise softmax of logits = X W^T + b.
inline Eigen::MatrixXd ProbeProbabilities(const ProbeModel& model, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd logits = x * model.weights.transpose();
  logits.rowwise() += model.bias.transpose();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - m).exp();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

// Mean cross-entropy over the rows plus (l2 / 2) ||W||^2, and its gradient.
inline ProbeGradient ProbeLossAndGradient(const ProbeModel& model, const Eigen::MatrixXd& x,
                                          const std::vector<int>& y, double l2) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd probs = ProbeProbabilities(model, x);
  ProbeGradient g;
  double nll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto yi = static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]);
    nll -= std::log(std::max(probs(i, yi), 1e-300));
    probs(i, yi) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  g.loss = nll * inv_n + 0.5 * l2 * model.weights.squaredNorm();
  g.weights = probs.transpose() * x * inv_n + l2 * model.weights;
  g.bias = probs.colwise().sum().transpose() * inv_n;
  return g;
}

namespace probe_internal {

inline std::vector<int> Labels(const EmbeddingSet& set) {
  if (!set.fully_labeled()) {
    throw Error(ErrorCode::kInvalidArgument, "probe data must be fully labeled");
  }
  return {set.labels.begin(), set.labels.end()};
}

}  // namespace probe_internal

inline ProbeModel TrainProbe(const EmbeddingSet& train, const ProbeConfig& config) {
  const auto y = probe_internal::Labels(train);
  if (std::set<int>(y.begin(), y.end()).size() < 2) {
    throw Error(ErrorCode::kSingleClass, "linear probe needs at least two classes");
  }
  if (config.batch_size < 1 || config.epochs < 0) {
    throw Error(ErrorCode::kInvalidArgument, "probe batch size and epochs must be positive");
  }
  const int num_classes = *std::max_element(y.begin(), y.end()) + 1;
  const Eigen::MatrixXd x = train.rows.cast<double>();
  ProbeModel model;
  model.config = config;
  model.weights = Eigen::MatrixXd::Zero(num_classes, x.cols());
  model.bias = Eigen::VectorXd::Zero(num_classes);
  model.initial_loss = ProbeLossAndGradient(model, x, y, config.l2).loss;

  const std::size_t n = y.size();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const double total_steps = static_cast<double>(steps_per_epoch) * config.epochs;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t m = std::min(batch, n - start);
      Eigen::MatrixXd xb(static_cast<Eigen::Index>(m), x.cols());
      std::vector<int> yb(m);
      for (std::size_t i = 0; i < m; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[start + i]));
        yb[i] = y[order[start + i]];
      }
      const auto g = ProbeLossAndGradient(model, xb, yb, config.l2);
      if (!std::isfinite(g.loss)) {
        throw Error(ErrorCode::kNonFiniteLoss, "probe loss diverged at epoch " + std::to_string(epoch));
      }
      const double lr = config.step_size * 0.5 *
                        (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
      model.weights -= lr * g.weights;
      model.bias -= lr * g.bias;
      ++step;
    }
  }
  model.final_loss = ProbeLossAndGradient(model, x, y, config.l2).loss;
  if (!std::isfinite(model.final_loss) || !model.weights.allFinite()) {
    throw Error(ErrorCode::kNonFiniteLoss, "probe parameters are not finite after training");
  }
  return model;
}

// Predicted class per row; ties go to the lowest class index.
inline std::vector<int> ProbePredict(const ProbeModel& model, const EmbeddingSet& set) {
  if (set.dim() != model.dim()) {
    throw Error(ErrorCode::kDimMismatch, "probe expects dim " + std::to_string(model.dim()) +
                                             ", got " + std::to_string(set.dim()));
  }
  Eigen::MatrixXd logits = set.rows.cast<double>() * model.weights.transpose();
  logits.rowwise() += model.bias.transpose();
  std::vector<int> out(set.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

inline double ProbeAccuracy(const ProbeModel& model, const EmbeddingSet& set) {
  const auto y = probe_internal::Labels(set);
  if (y.empty()) return 0.0;
  const auto pred = ProbePredict(model, set);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

struct ProbeGap {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double gap = 0.0;
};

inline ProbeGap ComputeProbeGap(const ProbeModel& model, const EmbeddingSet& train,
                                const EmbeddingSet& test) {
  if (train.dim() != model.dim() || test.dim() != model.dim()) {
    throw Error(ErrorCode::kDimMismatch, "probe and embedding dims differ");
  }
  ProbeGap g;
  g.train_accuracy = ProbeAccuracy(model, train);
  g.test_accuracy = ProbeAccuracy(model, test);
  g.gap = g.train_accuracy - g.test_accuracy;
  return g;
}

}  // namespace dejavu

#endif  // DEJAVU_LINEAR_PROBE_HPP_
