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

#ifndef KKTMIA_NN_ENGINE_H_
#define KKTMIA_NN_ENGINE_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace kktmia::nn {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A bias-free ReLU multilayer perceptron. With L weight layers the network is
// positively homogeneous of degree L in its parameters.
struct ArchSpec {
  int input_dim = 0;
  std::vector<int> hidden_widths;
  int num_classes = 2;

  absl::Status Validate() const;
  int NumLayers() const { return static_cast<int>(hidden_widths.size()) + 1; }
  // Fan-in of layer `l` (columns of its weight matrix).
  int LayerInputs(int l) const;
  // Fan-out of layer `l` (rows of its weight matrix).
  int LayerOutputs(int l) const;
  int64_t NumParams() const;

  bool operator==(const ArchSpec&) const = default;
};

// Placement of one weight matrix inside the flat parameter vector. Matrices
// are stored row-major, so each output neuron's incoming weights form a
// contiguous run of `cols` entries.
struct LayerLayout {
  int layer_index = 0;
  int rows = 0;
  int cols = 0;
  int64_t offset = 0;

  int64_t size() const { return static_cast<int64_t>(rows) * cols; }
};

// Flattened network weights plus their layout table.
class ParamVector {
 public:
  ParamVector() = default;
  // Zero-initialized parameters for `arch`. `arch` must be valid.
  explicit ParamVector(const ArchSpec& arch);
  ParamVector(const ArchSpec& arch, Eigen::VectorXd values);

  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  const std::vector<LayerLayout>& layout() const { return layout_; }
  int64_t size() const { return values_.size(); }
  int num_layers() const { return static_cast<int>(layout_.size()); }

  Eigen::Map<const RowMatrix> Layer(int l) const;
  Eigen::Map<RowMatrix> MutableLayer(int l);

  // True iff the layout matches `arch` exactly.
  bool Matches(const ArchSpec& arch) const;

 private:
  Eigen::VectorXd values_;
  std::vector<LayerLayout> layout_;
};

std::vector<LayerLayout> MakeLayout(const ArchSpec& arch);

struct Example {
  Eigen::VectorXd x;
  int y = 0;
};

absl::StatusOr<Eigen::VectorXd> ForwardLogits(const ArchSpec& arch,
                                              const ParamVector& theta,
                                              const Eigen::VectorXd& x);

// Logits for every column of `inputs` (d x B). No validation.
Eigen::MatrixXd ForwardBatch(const ParamVector& theta,
                             const Eigen::MatrixXd& inputs);

// Highest-scoring class other than `y`; ties go to the lowest index.
int RunnerUpClass(const Eigen::VectorXd& logits, int y);
// Highest-scoring class; ties go to the lowest index.
int PredictedClass(const Eigen::VectorXd& logits);

// Logit margin Phi_y - max_{j != y} Phi_j.
absl::StatusOr<double> Margin(const ArchSpec& arch, const ParamVector& theta,
                              const Eigen::VectorXd& x, int y);
double MarginFromLogits(const Eigen::VectorXd& logits, int y);

// Gradient of Phi_y - Phi_{j*} with j* the runner-up class. The ReLU
// subgradient at exactly zero is taken as zero.
absl::StatusOr<Eigen::VectorXd> MarginGradient(const ArchSpec& arch,
                                               const ParamVector& theta,
                                               const Eigen::VectorXd& x,
                                               int y);

// Gradient of the per-sample softmax cross-entropy.
absl::StatusOr<Eigen::VectorXd> LossGradient(const ArchSpec& arch,
                                             const ParamVector& theta,
                                             const Eigen::VectorXd& x, int y);

double CrossEntropyFromLogits(const Eigen::VectorXd& logits, int y);
absl::StatusOr<double> CrossEntropy(const ArchSpec& arch,
                                    const ParamVector& theta,
                                    const Eigen::VectorXd& x, int y);

// Per-sample gradients of s_i = <output_weights.col(i), Phi(x_i)>, one column
// per sample (p x B). Margin and loss gradients are both instances of this
// with different output weights.
Eigen::MatrixXd PerSampleGradients(const ParamVector& theta,
                                   const Eigen::MatrixXd& inputs,
                                   const Eigen::MatrixXd& output_weights);

// Sum over the batch of the same quantity; returns a length-p vector.
Eigen::VectorXd SummedGradient(const ParamVector& theta,
                               const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& output_weights);

// Mirrors a row-major width x width feature grid left to right.
Eigen::VectorXd FlipHorizontal(const Eigen::VectorXd& x);
// Side length of the square grid for dimension d, or 0 if d is not square.
int GridWidth(int d);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  // Coefficient of 0.5 * ||theta||^2 added to the mean cross-entropy.
  double weight_decay = 1e-4;
  int epochs = 2000;
  int batch_size = 100;
  uint64_t seed = 0;
  // Only honored when the data is image-shaped. Each sample then contributes
  // both its original and its mirrored view every epoch.
  bool flip_augment = false;
  // Stop once the mean training cross-entropy drops below this (0 disables).
  double loss_tol = 1e-3;
  // Stop once the full-batch gradient norm of the regularized objective drops
  // below this (0 disables).
  double grad_tol = 0.0;

  absl::Status Validate() const;
};

struct TrainResult {
  ParamVector theta;
  int epochs_run = 0;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
};

// Seeded uniform initialization in +-sqrt(1 / fan_in) per layer.
ParamVector InitParams(const ArchSpec& arch, uint64_t seed);

// The training set actually optimized: `data` plus mirrored views when flip
// augmentation applies.
std::vector<Example> TrainingViews(std::span<const Example> data,
                                   const TrainConfig& cfg, bool image_shaped);

// Minibatch SGD with heavy-ball momentum on
//   mean_i CE(x_i, y_i) + weight_decay / 2 * ||theta||^2.
// Deterministic: the same inputs give a bit-identical result.
absl::StatusOr<TrainResult> Train(const ArchSpec& arch,
                                  std::span<const Example> data,
                                  const TrainConfig& cfg,
                                  bool image_shaped = false);

double Accuracy(const ParamVector& theta, std::span<const Example> data);
double MeanCrossEntropy(const ParamVector& theta,
                        std::span<const Example> data);
// Full-batch gradient of the regularized training objective.
Eigen::VectorXd ObjectiveGradient(const ParamVector& theta,
                                  std::span<const Example> data,
                                  double weight_decay);

// Relative residual ||theta - sum_i l'_i grad Phi(x_i)|| / ||theta|| of the
// weight-decay stationarity identity, with l'_i = -(1 / (wd * n)) dl_i/dPhi.
// For two classes the sum is written over margin gradients,
// l'_i = (1 - p_{y_i}) / (wd * n); otherwise over all class logits.
absl::StatusOr<double> WeightDecayStationarityResidual(
    const ArchSpec& arch, const ParamVector& theta,
    std::span<const Example> data, double weight_decay);

// Checks ||Phi(x; c theta) - c^L Phi(x; theta)|| <= 1e-8 (1 + ||c^L Phi||)
// for an arbitrary forward map. Used directly with biased test fixtures.
bool HomogeneityCheck(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& forward,
    const Eigen::VectorXd& theta, int degree, double c);

bool HomogeneityCheck(const ArchSpec& arch, const ParamVector& theta,
                      const Eigen::VectorXd& x, double c);

}  // namespace kktmia::nn

#endif  // KKTMIA_NN_ENGINE_H_
