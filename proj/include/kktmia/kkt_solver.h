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

#ifndef KKTMIA_KKT_SOLVER_H_
#define KKTMIA_KKT_SOLVER_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "kktmia/grad_matrix.h"

namespace kktmia::solver {

// Per-block coefficient fit. The objective is
//
//   1 - cos(A lambda, theta_b) + alpha * sum_i min(lambda_i, 0)^2
//                              + beta  * sum_i lambda_i^2 * margin_i
//
// minimized with AdamW under a cosine-annealed step size.
struct SolverConfig {
  double alpha = 1.0;
  double beta = 0.1;
  int max_iters = 2000;
  double base_learning_rate = 0.01;
  // Decoupled (AdamW) decay applied to lambda each step.
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int early_stop_patience = 50;
  double early_stop_tol = 1e-7;
  // Echoed into reports. The iteration itself starts from lambda = 0 and
  // draws no random numbers.
  uint64_t seed = 0;

  absl::Status Validate() const;
};

struct ObjectiveTerms {
  double total = 0.0;
  double cosine_term = 0.0;
  double neg_term = 0.0;
  double marg_term = 0.0;
  // A lambda was the zero vector; cosine similarity was taken as 0.
  bool degenerate = false;
};

ObjectiveTerms Objective(const grad::GradientBlock& block,
                         const Eigen::VectorXd& lambda,
                         const Eigen::VectorXd& margins,
                         const SolverConfig& cfg);

struct TracePoint {
  int iteration = 0;
  ObjectiveTerms terms;
  double learning_rate = 0.0;
};

struct BlockSolution {
  // Best iterate seen, one coefficient per block column.
  Eigen::VectorXd coefficients;
  ObjectiveTerms best;
  int iterations = 0;
  // Best objective after each iteration; non-increasing.
  std::vector<double> best_history;
  std::vector<TracePoint> trace;
};

// `margins` holds one nonnegative margin per block column.
absl::StatusOr<BlockSolution> SolveBlock(const grad::GradientBlock& block,
                                         const Eigen::VectorXd& margins,
                                         const SolverConfig& cfg,
                                         bool record_trace = false);

// Population z-score; a constant input maps to all zeros.
Eigen::VectorXd ZScore(const Eigen::VectorXd& v);

// Divides each coefficient by its column's pre-normalization norm so it
// refers to the raw margin gradient, then z-scores over the block.
absl::StatusOr<Eigen::VectorXd> DebiasAndZscore(const Eigen::VectorXd& raw,
                                                const Eigen::VectorXd& norms);

struct LeastSquaresResult {
  Eigen::VectorXd coefficients;
  bool rank_deficient = false;
};

// argmin ||A lambda - b|| from the normal equations (A^T A + 1e-10 I).
// Rank-deficient systems fall back to the minimum-norm solution.
LeastSquaresResult ExactSolve(const Eigen::MatrixXd& a,
                              const Eigen::VectorXd& b);
LeastSquaresResult ExactSolve(const grad::GradientBlock& block);

struct MarginRecord {
  uint64_t sample_id = 0;
  int label = 0;
  double margin = 0.0;
};

// Per class, locates the mode of the margin distribution with a 64-bin
// histogram over the class's margin range and keeps samples in the modal bin
// or within width * IQR of the modal bin's center. Classes with a single
// sample pass through. Returns retained ids in input order.
std::vector<uint64_t> MarginIntervalFilter(
    const std::vector<MarginRecord>& records, double width);

struct LambdaEntry {
  uint64_t sample_id = 0;
  int view_id = 0;
  int block_id = 0;
  double raw = 0.0;
  double z = 0.0;
};

struct LambdaTable {
  std::vector<LambdaEntry> entries;
  // Blocks whose optimization aborted, with the reason.
  std::vector<std::pair<int, std::string>> failed_blocks;
};

// Appends one solved block to the table.
void AppendBlock(const grad::GradientBlock& block,
                 const Eigen::VectorXd& raw_coefficients,
                 const Eigen::VectorXd& zscored, LambdaTable* table);

// CSV: iteration,total,cosine_term,neg_term,marg_term,lr
absl::Status WriteSolverTrace(const std::string& path,
                              const std::vector<TracePoint>& trace);

}  // namespace kktmia::solver

#endif  // KKTMIA_KKT_SOLVER_H_
