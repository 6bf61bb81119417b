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

// Desk-scale stand-in for the two-model memorization test. Scenes pair a
// background vector with a class-dependent object vector; a toy joint-embedding
// encoder is trained to pull the background-only and object-only views of each
// scene together. Backgrounds are either drawn from a class-specific pool
// (recoverable by any model through correlation) or sampled uniquely per scene
// (recoverable only by a model that trained on that scene).

#ifndef DEJAVU_SYNTHETIC_LAB_HPP_
#define DEJAVU_SYNTHETIC_LAB_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dejavu/embedding_store.hpp"
#include "dejavu/error.hpp"
#include "dejavu/metrics.hpp"

namespace dejavu::lab {

struct SceneConfig {
  int num_classes = 10;
  // Per class, in each of the target and reference training sets.
  int scenes_per_class = 50;
  int public_per_class = 1000;
  int background_dim = 32;
  int object_dim = 16;
  // Probability that a scene's background comes from its class pool.
  double correlation = 0.0;
  double background_jitter = 0.5;
  double object_jitter = 0.5;
  std::uint64_t seed = 0;

  void Validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
    if (num_classes < 2) bad("num_classes must be >= 2");
    if (scenes_per_class < 1 || public_per_class < 1) bad("per-class counts must be >= 1");
    if (background_dim < 1 || object_dim < 1) bad("dims must be >= 1");
    if (!(correlation >= 0.0 && correlation <= 1.0)) bad("correlation must lie in [0, 1]");
    if (!(background_jitter > 0.0) || !(object_jitter > 0.0)) bad("jitters must be positive");
  }
};

enum class SceneSet : char { kTarget = 'A', kReference = 'B', kPublic = 'X' };

struct Scene {
  std::string id;
  int label = 0;
  SceneSet set = SceneSet::kTarget;
  Eigen::VectorXd background;
  Eigen::VectorXd object;
  bool correlated_background = false;
};

// Ground truth per scene: whether its background is class-correlated or
// unique to it.
struct LedgerEntry {
  std::string id;
  SceneSet set = SceneSet::kTarget;
  int label = 0;
  bool correlated_background = false;
};

struct SceneSplit {
  std::vector<Scene> train_a;
  std::vector<Scene> train_b;
  std::vector<Scene> public_set;
  std::vector<LedgerEntry> ledger;
  int num_classes = 0;
};

inline SceneSplit GenerateScenes(const SceneConfig& config) {
  config.Validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution correlated(config.correlation);
  auto gaussian = [&](int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
  };
  std::vector<Eigen::VectorXd> object_proto;
  std::vector<Eigen::VectorXd> background_proto;
  for (int c = 0; c < config.num_classes; ++c) object_proto.push_back(gaussian(config.object_dim));
  for (int c = 0; c < config.num_classes; ++c) {
    background_proto.push_back(gaussian(config.background_dim));
  }

  SceneSplit split;
  split.num_classes = config.num_classes;
  auto make = [&](SceneSet set, const char* prefix, int per_class, std::vector<Scene>& out) {
    int serial = 0;
    for (int c = 0; c < config.num_classes; ++c) {
      for (int i = 0; i < per_class; ++i) {
        Scene s;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s%06d", prefix, serial++);
        s.id = buf;
        s.label = c;
        s.set = set;
        s.object = object_proto[static_cast<std::size_t>(c)] + config.object_jitter * gaussian(config.object_dim);
        s.correlated_background = correlated(rng);
        s.background = s.correlated_background
                           ? Eigen::VectorXd(background_proto[static_cast<std::size_t>(c)] +
                                             config.background_jitter * gaussian(config.background_dim))
                           : gaussian(config.background_dim);
        split.ledger.push_back({s.id, set, c, s.correlated_background});
        out.push_back(std::move(s));
      }
    }
  };
  make(SceneSet::kTarget, "a", config.scenes_per_class, split.train_a);
  make(SceneSet::kReference, "b", config.scenes_per_class, split.train_b);
  make(SceneSet::kPublic, "x", config.public_per_class, split.public_set);
  return split;
}

enum class SceneView { kBackground, kObject, kFull };

inline View ToStoreView(SceneView v) {
  switch (v) {
    case SceneView::kBackground: return View::kPeriphery;
    case SceneView::kObject: return View::kObject;
    case SceneView::kFull: return View::kFull;
  }
  return View::kFull;
}

inline SceneView FromStoreView(View v) {
  switch (v) {
    case View::kPeriphery:
    case View::kCorner: return SceneView::kBackground;
    case View::kObject: return SceneView::kObject;
    case View::kFull: return SceneView::kFull;
  }
  return SceneView::kFull;
}

// Encoder input: [background | object] with the hidden part zeroed.
inline Eigen::VectorXd ViewInput(const Scene& s, SceneView view) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(s.background.size() + s.object.size());
  if (view != SceneView::kObject) x.head(s.background.size()) = s.background;
  if (view != SceneView::kBackground) x.tail(s.object.size()) = s.object;
  return x;
}

enum class LossKind { kInfoNce, kVicRegLike };

struct ToyConfig {
  int embed_dim = 32;
  int width = 64;
  int epochs = 500;
  int batch_size = 100;
  double learning_rate = 1e-4;
  double temperature = 0.15;
  LossKind loss = LossKind::kInfoNce;
  // VICReg-style coefficients: invariance, variance, covariance.
  double lambda = 25.0;
  double mu = 25.0;
  double nu = 1.0;
  double view_noise = 0.1;
  // Epochs at which weights are snapshotted; the final epoch is always kept.
  std::vector<int> checkpoints;
  std::uint64_t seed = 0;
};

// Two-layer perceptron: hidden = relu(W1 x + b1) is layer 0, output
// z = W2 hidden + b2 is layer 1.
struct EncoderWeights {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;

  bool AllFinite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
  }
};

struct Checkpoint {
  int epoch = 0;
  EncoderWeights weights;
};

struct ToyEncoder {
  ToyConfig config;
  std::vector<Checkpoint> checkpoints;  // ascending epoch
  std::vector<double> loss_history;     // mean batch loss per epoch

  const EncoderWeights& At(int epoch) const {
    for (const auto& c : checkpoints) {
      if (c.epoch == epoch) return c.weights;
    }
    throw Error(ErrorCode::kInvalidArgument, "no checkpoint at epoch " + std::to_string(epoch));
  }
  const EncoderWeights& Final() const { return checkpoints.back().weights; }
};

struct Activations {
  Eigen::MatrixXd hidden;  // rows = samples
  Eigen::MatrixXd output;
};

inline Activations Forward(const EncoderWeights& w, const Eigen::MatrixXd& x) {
  Activations a;
  a.hidden = x * w.w1.transpose();
  a.hidden.rowwise() += w.b1.transpose();
  a.hidden = a.hidden.cwiseMax(0.0);
  a.output = a.hidden * w.w2.transpose();
  a.output.rowwise() += w.b2.transpose();
  return a;
}

// Normalized-temperature cross-entropy over 2m views where rows i and i+m are
// positives: L = mean_i [ -s(i, pos(i)) / tau + log sum_{j != i} exp(s(i, j) / tau) ]
// with s the cosine similarity. Writes dL/dZ into grad.
inline double InfoNceLoss(const Eigen::MatrixXd& z, double tau, Eigen::MatrixXd& grad) {
  const Eigen::Index n = z.rows();
  const Eigen::Index m = n / 2;
  Eigen::VectorXd norms = z.rowwise().norm().cwiseMax(1e-12);
  Eigen::MatrixXd u = z.array().colwise() / norms.array();
  Eigen::MatrixXd s = (u * u.transpose()) / tau;
  double loss = 0.0;
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index pos = i < m ? i + m : i - m;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) mx = std::max(mx, s(i, j));
    }
    double denom = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      g(i, j) = j == i ? 0.0 : std::exp(s(i, j) - mx);
      denom += g(i, j);
    }
    loss += -s(i, pos) + mx + std::log(denom);
    g.row(i) /= denom;
    g(i, pos) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(n);
  loss *= inv;
  g *= inv / tau;  // dL/d(u_i . u_j)
  Eigen::MatrixXd du = (g + g.transpose()) * u;
  Eigen::VectorXd radial = (du.array() * u.array()).rowwise().sum();
  grad = (du - (u.array().colwise() * radial.array()).matrix());
  grad = grad.array().colwise() / norms.array();
  return loss;
}

namespace lab_internal {

struct BranchStats {
  double variance_term = 0.0;
  double covariance_term = 0.0;
};

// Variance hinge (1/d) sum_j relu(1 - sqrt(var_j + eps)) and covariance
// penalty (1/d) sum_{j != k} cov_jk^2 for one branch; adds
// var_weight * d(var)/dZ + cov_weight * d(cov)/dZ into grad.
inline BranchStats VarCov(const Eigen::MatrixXd& z, double var_weight, double cov_weight,
                          Eigen::Ref<Eigen::MatrixXd> grad) {
  constexpr double kEps = 1e-4;
  const double m = static_cast<double>(z.rows());
  const double d = static_cast<double>(z.cols());
  Eigen::MatrixXd c = z.rowwise() - z.colwise().mean();
  Eigen::VectorXd var = c.colwise().squaredNorm().transpose() / (m - 1.0);
  BranchStats st;
  Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double sd = std::sqrt(var[j] + kEps);
    if (sd < 1.0) {
      st.variance_term += (1.0 - sd) / d;
      // d/dc_ij of -(1/d) sqrt(var_j + eps) = -(1/d) c_ij / ((m - 1) sd)
      dc.col(j) += var_weight * (-c.col(j) / ((m - 1.0) * sd * d));
    }
  }
  Eigen::MatrixXd cov = (c.transpose() * c) / (m - 1.0);
  Eigen::MatrixXd off = cov;
  off.diagonal().setZero();
  st.covariance_term = off.squaredNorm() / d;
  // d/dC of (1/d) sum off^2 with cov = C^T C / (m - 1) is 4 C off / ((m - 1) d).
  dc += cov_weight * (4.0 / ((m - 1.0) * d)) * (c * off);
  // Centering: subtract the column mean of the gradient.
  grad += dc.rowwise() - dc.colwise().mean();
  return st;
}

}  // namespace lab_internal

// VICReg-style criterion between branches z[0:m) and z[m:2m):
//   L = lambda * mse(z1, z2) + mu * (v(z1) + v(z2)) / 2 + nu * (c(z1) + c(z2))
// with v the variance hinge and c the off-diagonal covariance penalty.
inline double VicRegLikeLoss(const Eigen::MatrixXd& z, double lambda, double mu, double nu,
                             Eigen::MatrixXd& grad) {
  const Eigen::Index m = z.rows() / 2;
  const Eigen::Index d = z.cols();
  grad = Eigen::MatrixXd::Zero(z.rows(), d);
  const Eigen::MatrixXd diff = z.topRows(m) - z.bottomRows(m);
  const double scale = 1.0 / static_cast<double>(m * d);
  const double invariance = diff.squaredNorm() * scale;
  grad.topRows(m) += lambda * 2.0 * scale * diff;
  grad.bottomRows(m) -= lambda * 2.0 * scale * diff;
  auto s1 = lab_internal::VarCov(z.topRows(m), mu / 2.0, nu, grad.topRows(m));
  auto s2 = lab_internal::VarCov(z.bottomRows(m), mu / 2.0, nu, grad.bottomRows(m));
  return lambda * invariance + mu * (s1.variance_term + s2.variance_term) / 2.0 +
         nu * (s1.covariance_term + s2.covariance_term);
}

// Loss of the configured criterion and its gradient with respect to every
// weight, for a stacked batch whose rows i and i + m are two views of one scene.
inline double LossAndGradient(const EncoderWeights& w, const Eigen::MatrixXd& x,
                              const ToyConfig& config, EncoderWeights& grad) {
  const Activations a = Forward(w, x);
  Eigen::MatrixXd dz;
  const double loss = config.loss == LossKind::kInfoNce
                          ? InfoNceLoss(a.output, config.temperature, dz)
                          : VicRegLikeLoss(a.output, config.lambda, config.mu, config.nu, dz);
  grad.w2 = dz.transpose() * a.hidden;
  grad.b2 = dz.colwise().sum().transpose();
  Eigen::MatrixXd dh = (dz * w.w2).cwiseProduct((a.hidden.array() > 0.0).cast<double>().matrix());
  grad.w1 = dh.transpose() * x;
  grad.b1 = dh.colwise().sum().transpose();
  return loss;
}

inline EncoderWeights InitWeights(int input_dim, const ToyConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  EncoderWeights w;
  w.w1.resize(config.width, input_dim);
  w.w2.resize(config.embed_dim, config.width);
  const double s1 = std::sqrt(2.0 / input_dim);
  const double s2 = std::sqrt(1.0 / config.width);
  for (Eigen::Index i = 0; i < w.w1.size(); ++i) w.w1.data()[i] = s1 * normal(rng);
  for (Eigen::Index i = 0; i < w.w2.size(); ++i) w.w2.data()[i] = s2 * normal(rng);
  w.b1 = Eigen::VectorXd::Zero(config.width);
  w.b2 = Eigen::VectorXd::Zero(config.embed_dim);
  return w;
}

namespace lab_internal {

class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void Step(EncoderWeights& w, const EncoderWeights& g) {
    if (m_.empty()) {
      for (const auto* p : {&g.w1, &g.w2}) {
        m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        v_.push_back(m_.back());
      }
      for (const auto* p : {&g.b1, &g.b2}) {
        m_.push_back(Eigen::MatrixXd::Zero(p->size(), 1));
        v_.push_back(m_.back());
      }
    }
    ++t_;
    Update(0, w.w1, g.w1);
    Update(1, w.w2, g.w2);
    Update(2, w.b1, g.b1);
    Update(3, w.b2, g.b2);
  }

 private:
  template <typename P, typename G>
  void Update(std::size_t i, P& param, const G& grad) {
    constexpr double kB1 = 0.9;
    constexpr double kB2 = 0.999;
    constexpr double kEps = 1e-8;
    auto gm = Eigen::Map<const Eigen::MatrixXd>(grad.data(), m_[i].rows(), m_[i].cols());
    auto pm = Eigen::Map<Eigen::MatrixXd>(param.data(), m_[i].rows(), m_[i].cols());
    m_[i] = kB1 * m_[i] + (1.0 - kB1) * gm;
    v_[i] = kB2 * v_[i] + (1.0 - kB2) * gm.cwiseProduct(gm);
    const double c1 = 1.0 - std::pow(kB1, t_);
    const double c2 = 1.0 - std::pow(kB2, t_);
    pm.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + kEps);
  }

  double lr_;
  int t_ = 0;
  std::vector<Eigen::MatrixXd> m_;
  std::vector<Eigen::MatrixXd> v_;
};

}  // namespace lab_internal

// Trains on (background view, object view) pairs of each scene, both views
// jittered with fresh Gaussian noise every time they are drawn.
inline ToyEncoder TrainToy(const std::vector<Scene>& scenes, const ToyConfig& config) {
  if (scenes.size() < 2 || config.batch_size < 2) {
    throw Error(ErrorCode::kInvalidConfig, "toy training needs at least 2 scenes per batch");
  }
  if (config.epochs < 0 || config.embed_dim < 1 || config.width < 1) {
    throw Error(ErrorCode::kInvalidConfig, "invalid toy encoder shape or epoch count");
  }
  const int bg_dim = static_cast<int>(scenes.front().background.size());
  const int obj_dim = static_cast<int>(scenes.front().object.size());
  const int input_dim = bg_dim + obj_dim;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  ToyEncoder enc;
  enc.config = config;
  EncoderWeights w = InitWeights(input_dim, config, rng);
  std::set<int> keep(config.checkpoints.begin(), config.checkpoints.end());
  keep.insert(config.epochs);
  if (keep.count(0)) enc.checkpoints.push_back({0, w});

  lab_internal::Adam adam(config.learning_rate);
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  EncoderWeights grad;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t m = std::min(batch, order.size() - start);
      if (m < 2) continue;
      Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * m), input_dim);
      for (std::size_t i = 0; i < m; ++i) {
        const Scene& s = scenes[order[start + i]];
        const auto bi = static_cast<Eigen::Index>(i);
        const auto oi = static_cast<Eigen::Index>(i + m);
        for (int j = 0; j < bg_dim; ++j) x(bi, j) = s.background[j] + config.view_noise * normal(rng);
        for (int j = 0; j < obj_dim; ++j) {
          x(oi, bg_dim + j) = s.object[j] + config.view_noise * normal(rng);
        }
      }
      const double loss = LossAndGradient(w, x, config, grad);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kNonFiniteLoss, "toy loss diverged at epoch " + std::to_string(epoch));
      }
      adam.Step(w, grad);
      epoch_loss += loss;
      ++batches;
    }
    enc.loss_history.push_back(batches ? epoch_loss / batches : 0.0);
    if (keep.count(epoch)) {
      if (!w.AllFinite()) {
        throw Error(ErrorCode::kNonFiniteLoss, "encoder weights not finite at epoch " + std::to_string(epoch));
      }
      enc.checkpoints.push_back({epoch, w});
    }
  }
  return enc;
}

// Classification-head fine-tune of a pretrained encoder: a linear head on
// the layer-1 output, cross-entropy on the full view of the training
// scenes, gradients flowing into the encoder.
struct FineTuneConfig {
  int epochs = 20;
  int batch_size = 100;
  double learning_rate = 1e-3;
  double view_noise = 0.1;
  // Fine-tune epochs to snapshot; 0 is the pretrained encoder.
  std::vector<int> checkpoints;
  std::uint64_t seed = 0;
};

struct ClassifierHead {
  Eigen::MatrixXd w;  // classes x embed_dim
  Eigen::VectorXd b;
};

// Mean cross-entropy of softmax(head(encoder(x))) and its gradients.
inline double ClassifierLossAndGradient(const EncoderWeights& w, const ClassifierHead& head,
                                        const Eigen::MatrixXd& x, const std::vector<int>& labels,
                                        EncoderWeights& grad, ClassifierHead& head_grad) {
  const Activations a = Forward(w, x);
  Eigen::MatrixXd logits = a.output * head.w.transpose();
  logits.rowwise() += head.b.transpose();
  const double m = static_cast<double>(x.rows());
  double loss = 0.0;
  Eigen::MatrixXd dl(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
    const double sum = e.sum();
    const int y = labels[static_cast<std::size_t>(i)];
    loss += std::log(sum) - (logits(i, y) - mx);
    dl.row(i) = e / sum;
    dl(i, y) -= 1.0;
  }
  dl /= m;
  head_grad.w = dl.transpose() * a.output;
  head_grad.b = dl.colwise().sum().transpose();
  const Eigen::MatrixXd dz = dl * head.w;
  grad.w2 = dz.transpose() * a.hidden;
  grad.b2 = dz.colwise().sum().transpose();
  Eigen::MatrixXd dh = (dz * w.w2).cwiseProduct((a.hidden.array() > 0.0).cast<double>().matrix());
  grad.w1 = dh.transpose() * x;
  grad.b1 = dh.colwise().sum().transpose();
  return loss / m;
}

struct FineTuned {
  // Checkpoints are indexed by fine-tune epoch.
  ToyEncoder encoder;
  // Head accuracy on the full view of the evaluation scenes, per checkpoint.
  std::vector<double> eval_accuracy;
};

inline double HeadAccuracy(const EncoderWeights& w, const ClassifierHead& head, const std::vector<Scene>& scenes) {
  if (scenes.empty()) return 0.0;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(scenes.size()), w.w1.cols());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = ViewInput(scenes[i], SceneView::kFull).transpose();
  }
  Eigen::MatrixXd logits = Forward(w, x).output * head.w.transpose();
  logits.rowwise() += head.b.transpose();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Eigen::Index arg = 0;
    logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    hits += static_cast<int>(arg) == scenes[i].label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(scenes.size());
}

inline FineTuned FineTuneToy(const EncoderWeights& pretrained, const std::vector<Scene>& scenes, int num_classes,
                             const FineTuneConfig& config, const std::vector<Scene>& eval = {}) {
  if (scenes.empty() || config.batch_size < 1 || config.epochs < 0 || num_classes < 2) {
    throw Error(ErrorCode::kInvalidConfig, "invalid fine-tune configuration");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  EncoderWeights w = pretrained;
  ClassifierHead head;
  head.w.resize(num_classes, w.w2.rows());
  const double s = std::sqrt(1.0 / static_cast<double>(w.w2.rows()));
  for (Eigen::Index i = 0; i < head.w.size(); ++i) head.w.data()[i] = s * normal(rng);
  head.b = Eigen::VectorXd::Zero(num_classes);

  FineTuned out;
  std::set<int> keep(config.checkpoints.begin(), config.checkpoints.end());
  keep.insert(config.epochs);
  auto snapshot = [&](int epoch) {
    out.encoder.checkpoints.push_back({epoch, w});
    out.eval_accuracy.push_back(HeadAccuracy(w, head, eval));
  };
  if (keep.count(0)) snapshot(0);

  // The head rides in the w1/b1 slots of a second optimizer state.
  lab_internal::Adam adam(config.learning_rate);
  lab_internal::Adam head_adam(config.learning_rate);
  EncoderWeights head_slot{head.w, head.b, Eigen::MatrixXd(0, 0), Eigen::VectorXd(0)};
  const Eigen::Index input_dim = w.w1.cols();
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  EncoderWeights grad;
  ClassifierHead head_grad;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t m = std::min(batch, order.size() - start);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(m), input_dim);
      std::vector<int> labels(m);
      for (std::size_t i = 0; i < m; ++i) {
        const Scene& sc = scenes[order[start + i]];
        x.row(static_cast<Eigen::Index>(i)) = ViewInput(sc, SceneView::kFull).transpose();
        for (Eigen::Index j = 0; j < input_dim; ++j) x(static_cast<Eigen::Index>(i), j) += config.view_noise * normal(rng);
        labels[i] = sc.label;
      }
      const double loss = ClassifierLossAndGradient(w, head, x, labels, grad, head_grad);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kNonFiniteLoss, "fine-tune loss diverged at epoch " + std::to_string(epoch));
      }
      adam.Step(w, grad);
      head_adam.Step(head_slot, EncoderWeights{head_grad.w, head_grad.b, Eigen::MatrixXd(0, 0), Eigen::VectorXd(0)});
      head.w = head_slot.w1;
      head.b = head_slot.b1;
      epoch_loss += loss;
      ++batches;
    }
    out.encoder.loss_history.push_back(epoch_loss / batches);
    if (keep.count(epoch)) snapshot(epoch);
  }
  return out;
}

// Noise-free embeddings of the given view at layer 0 (hidden) or 1 (output).
inline EmbeddingSet EmbedViews(const EncoderWeights& w, const std::vector<Scene>& scenes,
                               SceneView view, int layer, Provenance meta = {}) {
  if (layer != 0 && layer != 1) {
    throw Error(ErrorCode::kInvalidArgument, "toy encoder has layers 0 and 1 only");
  }
  const Eigen::Index input_dim = w.w1.cols();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(scenes.size()), input_dim);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = ViewInput(scenes[i], view).transpose();
  }
  const Activations a = Forward(w, x);
  EmbeddingSet out;
  out.rows = (layer == 0 ? a.hidden : a.output).cast<float>();
  for (const auto& s : scenes) {
    out.ids.push_back(s.id);
    out.labels.push_back(s.label);
  }
  meta.layer_index = layer;
  meta.view = ToStoreView(view);
  out.meta = std::move(meta);
  return out;
}

// Per-scene probabilities that each model infers the label, by ledger category.
struct OutcomeAssumptions {
  double target_planted = 1.0;
  double target_unplanted = 0.1;
  double target_correlated = 1.0;
  double reference_unique = 0.1;
  double reference_correlated = 1.0;

  static OutcomeAssumptions Chance(int num_classes, double target_planted = 1.0) {
    const double chance = 1.0 / num_classes;
    return {target_planted, chance, 1.0, chance, 1.0};
  }
};

struct ExpectedPartition {
  // {unassociated, memorized, misrepresented, correlated}
  std::array<double, 4> shares{};
  std::array<double, 4> counts{};
  std::size_t total = 0;
};

// Expected four-way partition of the target-set scenes when each model's
// success is an independent draw with the assumed probabilities. `planted`
// lists unique-background scenes the target model is assumed to have
// memorized; pass every unique scene's id for a fully memorizing target.
inline ExpectedPartition OracleExpectedPartition(const std::vector<LedgerEntry>& ledger,
                                                 const std::set<std::string>& planted,
                                                 const OutcomeAssumptions& a,
                                                 SceneSet query_set = SceneSet::kTarget) {
  ExpectedPartition out;
  for (const auto& e : ledger) {
    if (e.set != query_set) continue;
    double t;
    double r;
    if (e.correlated_background) {
      t = a.target_correlated;
      r = a.reference_correlated;
    } else {
      t = planted.count(e.id) ? a.target_planted : a.target_unplanted;
      r = a.reference_unique;
    }
    out.counts[0] += (1 - t) * (1 - r);
    out.counts[1] += t * (1 - r);
    out.counts[2] += (1 - t) * r;
    out.counts[3] += t * r;
    ++out.total;
  }
  for (std::size_t i = 0; i < 4; ++i) {
    out.shares[i] = out.total ? out.counts[i] / static_cast<double>(out.total) : 0.0;
  }
  return out;
}

// Embeddings with memorization planted directly, skipping training. Each model
// has its own class centers, all at the same distance from the origin; public
// rows sit around them. A target-set query lands on its class center when its
// background is correlated (both models) or planted (target model only);
// otherwise it is a point close to the origin, whose neighborhood mixes classes.
struct PlantConfig {
  double memorized_fraction = 0.1;
  int embed_dim = 16;
  double center_scale = 3.0;
  double cluster_spread = 0.3;
  double random_scale = 0.05;
  std::uint64_t seed = 0;
};

struct PlantedRun {
  EmbeddingSet target_public;
  EmbeddingSet target_queries;
  EmbeddingSet reference_public;
  EmbeddingSet reference_queries;
  std::set<std::string> planted;
  int num_classes = 0;
};

inline PlantedRun PlantEmbeddings(const SceneSplit& split, const PlantConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution plant(config.memorized_fraction);
  const int d = config.embed_dim;
  auto centers = [&] {
    std::vector<Eigen::VectorXf> c;
    for (int k = 0; k < split.num_classes; ++k) {
      Eigen::VectorXf v(d);
      for (int i = 0; i < d; ++i) v[i] = static_cast<float>(normal(rng));
      c.push_back(v.normalized() * static_cast<float>(config.center_scale * std::sqrt(d)));
    }
    return c;
  };
  auto jitter = [&](double scale) {
    Eigen::VectorXf v(d);
    for (int i = 0; i < d; ++i) v[i] = static_cast<float>(scale * normal(rng));
    return v;
  };
  const auto target_centers = centers();
  const auto reference_centers = centers();

  PlantedRun run;
  run.num_classes = split.num_classes;
  auto public_set = [&](const std::vector<Eigen::VectorXf>& c, const char* tag) {
    EmbeddingSet s;
    s.rows.resize(static_cast<Eigen::Index>(split.public_set.size()), d);
    for (std::size_t i = 0; i < split.public_set.size(); ++i) {
      const auto& sc = split.public_set[i];
      s.rows.row(static_cast<Eigen::Index>(i)) =
          (c[static_cast<std::size_t>(sc.label)] + jitter(config.cluster_spread)).transpose();
      s.ids.push_back(sc.id);
      s.labels.push_back(sc.label);
    }
    s.meta.model_tag = tag;
    s.meta.view = View::kFull;
    return s;
  };
  run.target_public = public_set(target_centers, "planted-target");
  run.reference_public = public_set(reference_centers, "planted-reference");

  const auto n = static_cast<Eigen::Index>(split.train_a.size());
  for (auto* q : {&run.target_queries, &run.reference_queries}) {
    q->rows.resize(n, d);
    q->meta.view = View::kPeriphery;
  }
  run.target_queries.meta.model_tag = "planted-target";
  run.reference_queries.meta.model_tag = "planted-reference";
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& sc = split.train_a[static_cast<std::size_t>(i)];
    const auto c = static_cast<std::size_t>(sc.label);
    const bool planted = !sc.correlated_background && plant(rng);
    if (planted) run.planted.insert(sc.id);
    const bool target_hit = sc.correlated_background || planted;
    run.target_queries.rows.row(i) =
        (target_hit ? Eigen::VectorXf(target_centers[c] + jitter(config.cluster_spread))
                    : jitter(config.random_scale))
            .transpose();
    run.reference_queries.rows.row(i) =
        (sc.correlated_background
             ? Eigen::VectorXf(reference_centers[c] + jitter(config.cluster_spread))
             : jitter(config.random_scale))
            .transpose();
    for (auto* q : {&run.target_queries, &run.reference_queries}) {
      q->ids.push_back(sc.id);
      q->labels.push_back(sc.label);
    }
  }
  return run;
}

// Accuracy of a model on its top-p% most confident queries when `hits` of the
// n queries are confidently correct and the rest are at chance and ranked
// below them.
inline double PlantedTopAccuracy(std::size_t hits, std::size_t n, double p, int num_classes) {
  const std::size_t top = TopCount(p, n);
  const double confident = static_cast<double>(std::min(hits, top));
  const double rest = static_cast<double>(top) - confident;
  return (confident + rest / num_classes) / static_cast<double>(top);
}

// Score the planted generator is designed to produce at percentile p.
inline double PlantedGap(const SceneSplit& split, const PlantedRun& run, double p) {
  std::size_t correlated = 0;
  for (const auto& s : split.train_a) correlated += s.correlated_background;
  const std::size_t n = split.train_a.size();
  return PlantedTopAccuracy(correlated + run.planted.size(), n, p, split.num_classes) -
         PlantedTopAccuracy(correlated, n, p, split.num_classes);
}

}  // namespace dejavu::lab

#endif  // DEJAVU_SYNTHETIC_LAB_HPP_
