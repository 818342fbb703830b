// Copyright 2026 The kktmia Authors
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

#include "kktmia/nn_engine.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

#include "absl/strings/str_cat.h"

namespace kktmia::nn {
namespace {

struct Activations {
  // act[l] is the input of layer l; act[0] is the raw batch.
  std::vector<Eigen::MatrixXd> act;
  // pre[l] = W_l * act[l]; pre.back() holds the logits.
  std::vector<Eigen::MatrixXd> pre;
};

Activations RunForward(const ParamVector& theta, const Eigen::MatrixXd& x) {
  Activations f;
  const int layers = theta.num_layers();
  f.act.reserve(layers);
  f.pre.reserve(layers);
  f.act.push_back(x);
  for (int l = 0; l < layers; ++l) {
    f.pre.push_back(theta.Layer(l) * f.act.back());
    if (l + 1 < layers) f.act.push_back(f.pre.back().cwiseMax(0.0));
  }
  return f;
}

// Back-propagates `upstream` (C x B) and returns the per-layer deltas.
std::vector<Eigen::MatrixXd> Deltas(const ParamVector& theta,
                                    const Activations& f,
                                    const Eigen::MatrixXd& upstream) {
  const int layers = theta.num_layers();
  std::vector<Eigen::MatrixXd> delta(layers);
  delta[layers - 1] = upstream;
  for (int l = layers - 1; l > 0; --l) {
    Eigen::MatrixXd back = theta.Layer(l).transpose() * delta[l];
    // Subgradient of ReLU at 0 is 0.
    delta[l - 1] =
        back.cwiseProduct((f.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return delta;
}

absl::Status CheckInput(const ArchSpec& arch, const ParamVector& theta,
                        const Eigen::VectorXd& x) {
  if (!theta.Matches(arch)) {
    return absl::InvalidArgumentError("parameter vector does not match arch");
  }
  if (x.size() != arch.input_dim) {
    return absl::InvalidArgumentError(absl::StrCat(
        "input has length ", x.size(), ", expected ", arch.input_dim));
  }
  return absl::OkStatus();
}

absl::Status CheckLabel(const ArchSpec& arch, int y) {
  if (y < 0 || y >= arch.num_classes) {
    return absl::InvalidArgumentError(
        absl::StrCat("label ", y, " outside [0, ", arch.num_classes, ")"));
  }
  return absl::OkStatus();
}

Eigen::VectorXd Softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

// d CE / d logits for one sample.
Eigen::VectorXd LossUpstream(const Eigen::VectorXd& logits, int y) {
  Eigen::VectorXd g = Softmax(logits);
  g(y) -= 1.0;
  return g;
}

Eigen::MatrixXd Stack(std::span<const Example> data, int64_t begin,
                      std::span<const int> order, int count) {
  const int d = static_cast<int>(data[0].x.size());
  Eigen::MatrixXd x(d, count);
  for (int i = 0; i < count; ++i) x.col(i) = data[order[begin + i]].x;
  return x;
}

}  // namespace

absl::Status ArchSpec::Validate() const {
  if (input_dim < 1) return absl::InvalidArgumentError("input_dim must be >= 1");
  if (num_classes < 2) {
    return absl::InvalidArgumentError("num_classes must be >= 2");
  }
  for (int w : hidden_widths) {
    if (w < 1) return absl::InvalidArgumentError("hidden widths must be >= 1");
  }
  return absl::OkStatus();
}

int ArchSpec::LayerInputs(int l) const {
  return l == 0 ? input_dim : hidden_widths[l - 1];
}

int ArchSpec::LayerOutputs(int l) const {
  return l + 1 == NumLayers() ? num_classes : hidden_widths[l];
}

int64_t ArchSpec::NumParams() const {
  int64_t p = 0;
  for (int l = 0; l < NumLayers(); ++l) {
    p += static_cast<int64_t>(LayerInputs(l)) * LayerOutputs(l);
  }
  return p;
}

std::vector<LayerLayout> MakeLayout(const ArchSpec& arch) {
  std::vector<LayerLayout> layout;
  int64_t offset = 0;
  for (int l = 0; l < arch.NumLayers(); ++l) {
    LayerLayout entry{l, arch.LayerOutputs(l), arch.LayerInputs(l), offset};
    offset += entry.size();
    layout.push_back(entry);
  }
  return layout;
}

ParamVector::ParamVector(const ArchSpec& arch)
    : values_(Eigen::VectorXd::Zero(arch.NumParams())),
      layout_(MakeLayout(arch)) {}

ParamVector::ParamVector(const ArchSpec& arch, Eigen::VectorXd values)
    : values_(std::move(values)), layout_(MakeLayout(arch)) {}

Eigen::Map<const RowMatrix> ParamVector::Layer(int l) const {
  const LayerLayout& e = layout_[l];
  return Eigen::Map<const RowMatrix>(values_.data() + e.offset, e.rows, e.cols);
}

Eigen::Map<RowMatrix> ParamVector::MutableLayer(int l) {
  const LayerLayout& e = layout_[l];
  return Eigen::Map<RowMatrix>(values_.data() + e.offset, e.rows, e.cols);
}

bool ParamVector::Matches(const ArchSpec& arch) const {
  if (values_.size() != arch.NumParams()) return false;
  const std::vector<LayerLayout> expected = MakeLayout(arch);
  if (expected.size() != layout_.size()) return false;
  for (size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].rows != layout_[i].rows ||
        expected[i].cols != layout_[i].cols ||
        expected[i].offset != layout_[i].offset) {
      return false;
    }
  }
  return true;
}

Eigen::MatrixXd ForwardBatch(const ParamVector& theta,
                             const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd h = inputs;
  const int layers = theta.num_layers();
  for (int l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = theta.Layer(l) * h;
    if (l + 1 < layers) {
      h = z.cwiseMax(0.0);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

absl::StatusOr<Eigen::VectorXd> ForwardLogits(const ArchSpec& arch,
                                              const ParamVector& theta,
                                              const Eigen::VectorXd& x) {
  if (absl::Status s = CheckInput(arch, theta, x); !s.ok()) return s;
  return Eigen::VectorXd(ForwardBatch(theta, x).col(0));
}

int RunnerUpClass(const Eigen::VectorXd& logits, int y) {
  int best = -1;
  for (int j = 0; j < logits.size(); ++j) {
    if (j == y) continue;
    if (best < 0 || logits(j) > logits(best)) best = j;
  }
  return best;
}

int PredictedClass(const Eigen::VectorXd& logits) {
  int best = 0;
  for (int j = 1; j < logits.size(); ++j) {
    if (logits(j) > logits(best)) best = j;
  }
  return best;
}

double MarginFromLogits(const Eigen::VectorXd& logits, int y) {
  return logits(y) - logits(RunnerUpClass(logits, y));
}

absl::StatusOr<double> Margin(const ArchSpec& arch, const ParamVector& theta,
                              const Eigen::VectorXd& x, int y) {
  if (absl::Status s = CheckLabel(arch, y); !s.ok()) return s;
  absl::StatusOr<Eigen::VectorXd> logits = ForwardLogits(arch, theta, x);
  if (!logits.ok()) return logits.status();
  return MarginFromLogits(*logits, y);
}

Eigen::MatrixXd PerSampleGradients(const ParamVector& theta,
                                   const Eigen::MatrixXd& inputs,
                                   const Eigen::MatrixXd& output_weights) {
  const Activations f = RunForward(theta, inputs);
  const std::vector<Eigen::MatrixXd> delta = Deltas(theta, f, output_weights);
  const int64_t batch = inputs.cols();
  Eigen::MatrixXd grads(theta.size(), batch);
  for (int l = 0; l < theta.num_layers(); ++l) {
    const LayerLayout& e = theta.layout()[l];
    for (int64_t i = 0; i < batch; ++i) {
      for (int r = 0; r < e.rows; ++r) {
        grads.col(i).segment(e.offset + static_cast<int64_t>(r) * e.cols,
                             e.cols) = delta[l](r, i) * f.act[l].col(i);
      }
    }
  }
  return grads;
}

Eigen::VectorXd SummedGradient(const ParamVector& theta,
                               const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& output_weights) {
  const Activations f = RunForward(theta, inputs);
  const std::vector<Eigen::MatrixXd> delta = Deltas(theta, f, output_weights);
  Eigen::VectorXd grad(theta.size());
  for (int l = 0; l < theta.num_layers(); ++l) {
    const LayerLayout& e = theta.layout()[l];
    Eigen::Map<RowMatrix>(grad.data() + e.offset, e.rows, e.cols) =
        delta[l] * f.act[l].transpose();
  }
  return grad;
}

absl::StatusOr<Eigen::VectorXd> MarginGradient(const ArchSpec& arch,
                                               const ParamVector& theta,
                                               const Eigen::VectorXd& x,
                                               int y) {
  if (absl::Status s = CheckLabel(arch, y); !s.ok()) return s;
  if (absl::Status s = CheckInput(arch, theta, x); !s.ok()) return s;
  const Eigen::VectorXd logits = ForwardBatch(theta, x).col(0);
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(arch.num_classes, 1);
  upstream(y, 0) = 1.0;
  upstream(RunnerUpClass(logits, y), 0) = -1.0;
  return Eigen::VectorXd(PerSampleGradients(theta, x, upstream).col(0));
}

absl::StatusOr<Eigen::VectorXd> LossGradient(const ArchSpec& arch,
                                             const ParamVector& theta,
                                             const Eigen::VectorXd& x, int y) {
  if (absl::Status s = CheckLabel(arch, y); !s.ok()) return s;
  if (absl::Status s = CheckInput(arch, theta, x); !s.ok()) return s;
  const Eigen::VectorXd logits = ForwardBatch(theta, x).col(0);
  const Eigen::MatrixXd upstream = LossUpstream(logits, y);
  return Eigen::VectorXd(PerSampleGradients(theta, x, upstream).col(0));
}

double CrossEntropyFromLogits(const Eigen::VectorXd& logits, int y) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(y);
}

absl::StatusOr<double> CrossEntropy(const ArchSpec& arch,
                                    const ParamVector& theta,
                                    const Eigen::VectorXd& x, int y) {
  if (absl::Status s = CheckLabel(arch, y); !s.ok()) return s;
  absl::StatusOr<Eigen::VectorXd> logits = ForwardLogits(arch, theta, x);
  if (!logits.ok()) return logits.status();
  return CrossEntropyFromLogits(*logits, y);
}

int GridWidth(int d) {
  const int w = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  return w * w == d ? w : 0;
}

Eigen::VectorXd FlipHorizontal(const Eigen::VectorXd& x) {
  const int w = GridWidth(static_cast<int>(x.size()));
  Eigen::VectorXd out(x.size());
  for (int r = 0; r < w; ++r) {
    for (int c = 0; c < w; ++c) out(r * w + c) = x(r * w + (w - 1 - c));
  }
  return out;
}

absl::Status TrainConfig::Validate() const {
  if (!(learning_rate > 0)) {
    return absl::InvalidArgumentError("learning_rate must be positive");
  }
  if (!(momentum >= 0 && momentum < 1)) {
    return absl::InvalidArgumentError("momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0)) {
    return absl::InvalidArgumentError("weight_decay must be nonnegative");
  }
  if (epochs < 0) return absl::InvalidArgumentError("epochs must be >= 0");
  if (batch_size < 1) {
    return absl::InvalidArgumentError("batch_size must be positive");
  }
  return absl::OkStatus();
}

ParamVector InitParams(const ArchSpec& arch, uint64_t seed) {
  ParamVector theta(arch);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < arch.NumLayers(); ++l) {
    const double bound = std::sqrt(1.0 / arch.LayerInputs(l));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const LayerLayout& e = theta.layout()[l];
    for (int64_t k = 0; k < e.size(); ++k) {
      theta.values()(e.offset + k) = dist(rng);
    }
  }
  return theta;
}

std::vector<Example> TrainingViews(std::span<const Example> data,
                                   const TrainConfig& cfg, bool image_shaped) {
  std::vector<Example> views(data.begin(), data.end());
  if (cfg.flip_augment && image_shaped) {
    views.reserve(2 * data.size());
    for (const Example& e : data) views.push_back({FlipHorizontal(e.x), e.y});
  }
  return views;
}

double Accuracy(const ParamVector& theta, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const Eigen::MatrixXd logits = ForwardBatch(
      theta, Stack(data, 0, order, static_cast<int>(data.size())));
  int correct = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    if (PredictedClass(logits.col(i)) == data[i].y) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

double MeanCrossEntropy(const ParamVector& theta,
                        std::span<const Example> data) {
  if (data.empty()) return 0.0;
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const Eigen::MatrixXd logits = ForwardBatch(
      theta, Stack(data, 0, order, static_cast<int>(data.size())));
  double total = 0.0;
  for (size_t i = 0; i < data.size(); ++i) {
    total += CrossEntropyFromLogits(logits.col(i), data[i].y);
  }
  return total / data.size();
}

Eigen::VectorXd ObjectiveGradient(const ParamVector& theta,
                                  std::span<const Example> data,
                                  double weight_decay) {
  const int n = static_cast<int>(data.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const Eigen::MatrixXd x = Stack(data, 0, order, n);
  const Eigen::MatrixXd logits = ForwardBatch(theta, x);
  Eigen::MatrixXd upstream(logits.rows(), n);
  for (int i = 0; i < n; ++i) {
    upstream.col(i) = LossUpstream(logits.col(i), data[i].y) / n;
  }
  return SummedGradient(theta, x, upstream) + weight_decay * theta.values();
}

absl::StatusOr<TrainResult> Train(const ArchSpec& arch,
                                  std::span<const Example> data,
                                  const TrainConfig& cfg, bool image_shaped) {
  if (absl::Status s = arch.Validate(); !s.ok()) return s;
  if (absl::Status s = cfg.Validate(); !s.ok()) return s;
  if (data.empty()) return absl::InvalidArgumentError("training set is empty");
  for (const Example& e : data) {
    if (e.x.size() != arch.input_dim) {
      return absl::InvalidArgumentError("training sample has wrong dimension");
    }
    if (absl::Status s = CheckLabel(arch, e.y); !s.ok()) return s;
  }
  if (image_shaped && GridWidth(arch.input_dim) == 0) {
    return absl::InvalidArgumentError(
        "image-shaped data needs a square input dimension");
  }

  const std::vector<Example> views = TrainingViews(data, cfg, image_shaped);
  const int n = static_cast<int>(views.size());
  const int batch = std::min(cfg.batch_size, n);

  TrainResult result;
  result.theta = InitParams(arch, cfg.seed);
  ParamVector& theta = result.theta;
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(theta.size());
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995u);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += batch) {
      const int count = std::min(batch, n - start);
      const Eigen::MatrixXd x = Stack(views, start, order, count);
      const Eigen::MatrixXd logits = ForwardBatch(theta, x);
      Eigen::MatrixXd upstream(logits.rows(), count);
      double loss = 0.0;
      for (int i = 0; i < count; ++i) {
        const int y = views[order[start + i]].y;
        loss += CrossEntropyFromLogits(logits.col(i), y);
        upstream.col(i) = LossUpstream(logits.col(i), y) / count;
      }
      if (!std::isfinite(loss)) {
        return absl::InternalError(absl::StrCat(
            "non-finite training loss at epoch ", epoch,
            "; the learning rate is probably too high"));
      }
      const Eigen::VectorXd grad = SummedGradient(theta, x, upstream) +
                                   cfg.weight_decay * theta.values();
      velocity = cfg.momentum * velocity + grad;
      theta.values() -= cfg.learning_rate * velocity;
    }
    result.epochs_run = epoch + 1;
    if (cfg.loss_tol > 0 && MeanCrossEntropy(theta, views) < cfg.loss_tol) {
      break;
    }
    if (cfg.grad_tol > 0 &&
        ObjectiveGradient(theta, views, cfg.weight_decay).norm() <=
            cfg.grad_tol) {
      break;
    }
  }
  result.final_loss = MeanCrossEntropy(theta, views);
  result.final_grad_norm =
      ObjectiveGradient(theta, views, cfg.weight_decay).norm();
  if (!std::isfinite(result.final_loss)) {
    return absl::InternalError(
        "non-finite final loss; the learning rate is probably too high");
  }
  return result;
}

absl::StatusOr<double> WeightDecayStationarityResidual(
    const ArchSpec& arch, const ParamVector& theta,
    std::span<const Example> data, double weight_decay) {
  if (!(weight_decay > 0)) {
    return absl::InvalidArgumentError("weight_decay must be positive");
  }
  if (data.empty()) return absl::InvalidArgumentError("empty dataset");
  if (!theta.Matches(arch)) {
    return absl::InvalidArgumentError("parameter vector does not match arch");
  }
  const double scale = 1.0 / (weight_decay * static_cast<double>(data.size()));
  Eigen::VectorXd combination = Eigen::VectorXd::Zero(theta.size());
  for (const Example& e : data) {
    const Eigen::VectorXd logits = ForwardBatch(theta, e.x).col(0);
    if (arch.num_classes == 2) {
      const double coef = (1.0 - Softmax(logits)(e.y)) * scale;
      absl::StatusOr<Eigen::VectorXd> g = MarginGradient(arch, theta, e.x, e.y);
      if (!g.ok()) return g.status();
      combination += coef * *g;
    } else {
      const Eigen::MatrixXd upstream = -scale * LossUpstream(logits, e.y);
      combination += PerSampleGradients(theta, e.x, upstream).col(0);
    }
  }
  const double norm = theta.values().norm();
  if (norm == 0.0) return absl::FailedPreconditionError("theta is zero");
  return (theta.values() - combination).norm() / norm;
}

bool HomogeneityCheck(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& forward,
    const Eigen::VectorXd& theta, int degree, double c) {
  const Eigen::VectorXd expected = std::pow(c, degree) * forward(theta);
  const Eigen::VectorXd scaled = forward(c * theta);
  return (scaled - expected).norm() <= 1e-8 * (1.0 + expected.norm());
}

bool HomogeneityCheck(const ArchSpec& arch, const ParamVector& theta,
                      const Eigen::VectorXd& x, double c) {
  auto forward = [&](const Eigen::VectorXd& values) {
    return Eigen::VectorXd(ForwardBatch(ParamVector(arch, values), x).col(0));
  };
  return HomogeneityCheck(forward, theta.values(), arch.NumLayers(), c);
}

}  // namespace kktmia::nn
