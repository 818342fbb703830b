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

#ifndef KKTMIA_SCORE_PIPELINE_H_
#define KKTMIA_SCORE_PIPELINE_H_

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "kktmia/grad_matrix.h"
#include "kktmia/kkt_solver.h"

namespace kktmia::score {

// Score given to candidates that never reach the fusion stage (misclassified
// or filtered). It is the lowest finite double, and the evaluator never
// counts it as a positive.
inline constexpr double kSentinelScore = std::numeric_limits<double>::lowest();

inline bool IsSentinel(double s) { return s == kSentinelScore; }

struct FusionConfig {
  double trim_fraction = 0.2;
  bool use_trim = true;
  bool use_snr = true;
  double w_trim = 0.5;
  double w_snr = 0.5;
  // Stage toggles, in pipeline order.
  bool boost_class = true;
  bool boost_sample = true;
  bool distance_scale = true;
  double gamma = 0.5;
  double delta = 0.5;
  double eta = 0.5;
  double eps_div = 1e-3;
  int top_k = 5;
  double epsilon_std = 1e-8;

  absl::Status Validate() const;
};

// Sorts, drops floor(trim_fraction * n) values from each end and averages
// the rest. Falls back to the median if nothing would remain.
double TrimmedMean(std::span<const double> values, double trim_fraction);

// mean / (population std + epsilon_std).
double Snr(std::span<const double> values, double epsilon_std);

// Average ranks (ties share their mean rank), then a population z-score.
Eigen::VectorXd RankZ(const Eigen::VectorXd& v);

struct FusedScores {
  // Ascending sample ids; one entry per sample present in the table.
  std::vector<uint64_t> sample_ids;
  Eigen::VectorXd trimmed;
  Eigen::VectorXd snr;
  Eigen::VectorXd fused;
};

// Averages each sample's z-scored coefficients over its views within a
// block, then fuses the per-block values with the trimmed mean and SNR:
//   fused = w_trim * RankZ(trimmed) + w_snr * RankZ(snr).
FusedScores Fuse(const solver::LambdaTable& table, const FusionConfig& cfg);

// score_i * (1 + gamma * (max_c m_c - m_{c(i)}) / (max_c m_c - min_c m_c + eps))
// with m_c the mean margin of class c over the given samples.
Eigen::VectorXd ClassBoost(const Eigen::VectorXd& scores,
                           const std::vector<int>& classes,
                           const Eigen::VectorXd& margins, double gamma);

// score_i * (1 + delta / (1 + margin_i / s)), s the median margin.
Eigen::VectorXd SampleBoost(const Eigen::VectorXd& scores,
                            const Eigen::VectorXd& margins, double delta);

// score_i / (|margin_i - m_c|^eta + eps_div), where m_c is the mean margin of
// the top_k highest-scoring samples of class c.
Eigen::VectorXd DistanceScale(const Eigen::VectorXd& scores,
                              const std::vector<int>& classes,
                              const Eigen::VectorXd& margins, int top_k,
                              double eta, double eps_div);

struct ScoreRow {
  uint64_t sample_id = 0;
  double final_score = kSentinelScore;
  double fused = kSentinelScore;
  double boosted = kSentinelScore;
  double scaled = kSentinelScore;
  double margin = 0.0;
  int predicted_class = 0;
};

// Per-sample scores for one attack run, in pool order. Higher means a
// stronger membership claim.
struct ScoreReport {
  std::string attack_name;
  std::vector<ScoreRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;
};

// Runs fusion and the enabled post-processing stages for every pool sample.
// Cumulative stage list for ablations: trim-only, snr-only, fusion, +boost1
// (class), +boost2 (sample), +distance. Other settings come from `base`.
std::vector<std::pair<std::string, FusionConfig>> AblationStages(
    const FusionConfig& base);

// Samples without coefficients keep the sentinel score. Post-processing works
// on fused - min(fused) + 1 so the multiplicative stages act on positive
// values.
ScoreReport BuildScoreReport(const std::vector<grad::SampleMargin>& margins,
                             const solver::LambdaTable& table,
                             const FusionConfig& cfg);

// CSV: sample_id,final_score,fused,boosted,scaled,margin,predicted_class
// plus a JSON sidecar holding attack_name and metadata.
absl::Status WriteScoreReport(const std::string& csv_path,
                              const std::string& json_path,
                              const ScoreReport& report);
absl::StatusOr<ScoreReport> ReadScoreReport(const std::string& csv_path,
                                            const std::string& json_path);

}  // namespace kktmia::score

#endif  // KKTMIA_SCORE_PIPELINE_H_
