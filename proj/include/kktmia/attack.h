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

#ifndef KKTMIA_ATTACK_H_
#define KKTMIA_ATTACK_H_

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "kktmia/data_lab.h"
#include "kktmia/grad_matrix.h"
#include "kktmia/kkt_solver.h"
#include "kktmia/nn_engine.h"
#include "kktmia/score_pipeline.h"

namespace kktmia::attack {

struct AttackConfig {
  int64_t block_size_target = 4096;
  // Restrict the gradient matrix to the last k weight layers (0 = all).
  int last_k_layers = 0;
  grad::Precision precision = grad::Precision::kF64;
  // Margin-interval pre-selection for large pools; infinity disables it.
  double margin_filter_width = std::numeric_limits<double>::infinity();
  solver::SolverConfig solver;
  score::FusionConfig fusion;
  int threads = 1;
  // When non-empty, blocks are cached as <dir>/block_<id>.bin and reused if
  // the cached column index matches.
  std::string blocks_cache_dir;
  // When non-empty, per-block solver traces go to <dir>/trace_block_<id>.csv.
  std::string trace_dir;
};

struct AttackResult {
  score::ScoreReport report;
  solver::LambdaTable lambdas;
  grad::BlockLayout layout;
  int retained_candidates = 0;
  int dropped_columns = 0;
};

// The full coefficient attack: prefilter, gradient blocks, per-block solve,
// debias + z-score, fusion and post-processing. Uses nothing but the model and
// the untagged pool. Output is identical for any thread count.
absl::StatusOr<AttackResult> RunImpMia(const data::CandidatePool& pool,
                                       const nn::ArchSpec& arch,
                                       const nn::ParamVector& theta,
                                       const AttackConfig& cfg);

// Re-scores already-solved coefficients under a different fusion config.
score::ScoreReport Rescore(const data::CandidatePool& pool,
                           const nn::ParamVector& theta,
                           const solver::LambdaTable& lambdas,
                           const score::FusionConfig& fusion);

}  // namespace kktmia::attack

#endif  // KKTMIA_ATTACK_H_
