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

#ifndef KKTMIA_BASELINES_H_
#define KKTMIA_BASELINES_H_

#include <string_view>

#include "absl/status/statusor.h"
#include "kktmia/data_lab.h"
#include "kktmia/nn_engine.h"
#include "kktmia/score_pipeline.h"

namespace kktmia::baselines {

// Baselines share the attack report format; fused/boosted/scaled all carry
// the baseline score.
using BaselineReport = score::ScoreReport;

enum class GradKind { kLoss, kMargin };

// Per-layer gradient norms for every sample and (when image-shaped) its
// mirror. Within each (layer, view) slot the smallest norm receives the
// largest rank n; the score is the mean rank over layers and views divided by
// the pool size n, so it lies in (0, 1].
absl::StatusOr<BaselineReport> GradNormScore(const data::CandidatePool& pool,
                                             const nn::ArchSpec& arch,
                                             const nn::ParamVector& theta,
                                             GradKind kind);

// Population loss thresholding: score = -cross_entropy(x, y).
absl::StatusOr<BaselineReport> LossThresholdScore(
    const data::CandidatePool& pool, const nn::ArchSpec& arch,
    const nn::ParamVector& theta);

}  // namespace kktmia::baselines

#endif  // KKTMIA_BASELINES_H_
