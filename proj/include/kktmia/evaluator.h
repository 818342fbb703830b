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

#ifndef KKTMIA_EVALUATOR_H_
#define KKTMIA_EVALUATOR_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "json.hpp"
#include "kktmia/data_lab.h"
#include "kktmia/score_pipeline.h"

namespace kktmia::eval {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct TprPoint {
  double fpr_target = 0.0;
  // floor(fpr_target * n_nonmembers).
  int64_t allowed_false_positives = 0;
  double achieved_fpr = 0.0;
  double tpr = 0.0;
  // Samples strictly above this value are called members.
  double threshold = 0.0;
};

struct MetricsReport {
  double auc = 0.0;
  std::vector<TprPoint> tpr_at;
  std::vector<RocPoint> roc;
  int64_t n_members = 0;
  int64_t n_nonmembers = 0;
};

// Threshold sweep over distinct scores, highest first; tied samples cross
// together. Sentinel scores are never called positive, the curve is closed
// at (1, 1), and AUC is the trapezoidal area.
absl::StatusOr<MetricsReport> RocAndAuc(std::span<const double> scores,
                                        const std::vector<bool>& is_member);

// Smallest threshold with at most floor(target * n_nonmembers) non-members
// strictly above it. A target of 0 therefore means zero false positives.
absl::StatusOr<TprPoint> TprAtFpr(std::span<const double> scores,
                                  const std::vector<bool>& is_member,
                                  double fpr_target);

// Default low-FPR targets for pools of a few hundred samples.
std::vector<double> DefaultFprTargets();

absl::StatusOr<MetricsReport> Evaluate(std::span<const double> scores,
                                       const std::vector<bool>& is_member,
                                       const std::vector<double>& fpr_targets);

// Lines up report scores with ground truth by sample id. Every scored sample
// must appear in the truth table.
absl::Status JoinTruth(const score::ScoreReport& report,
                       const data::MembershipTruth& truth,
                       std::vector<double>* scores,
                       std::vector<bool>* is_member);

struct MetricSummary {
  std::string name;
  std::vector<double> values;
  double mean = 0.0;
  // Sample standard deviation / sqrt(n); 0 for a single value.
  double standard_error = 0.0;
};

struct AggregateReport {
  int num_seeds = 0;
  std::vector<MetricSummary> metrics;

  const MetricSummary* Find(const std::string& name) const;
};

// Mean and standard error per metric: "auc" and "tpr@<target>".
absl::StatusOr<AggregateReport> AggregateSeeds(
    const std::vector<MetricsReport>& reports);

MetricSummary Summarize(std::string name, std::vector<double> values);

nlohmann::ordered_json ToJson(const MetricsReport& report);
nlohmann::ordered_json ToJson(const AggregateReport& report);

// fpr,tpr rows.
absl::Status WriteRocCsv(const std::string& path, const MetricsReport& report);

}  // namespace kktmia::eval

#endif  // KKTMIA_EVALUATOR_H_
