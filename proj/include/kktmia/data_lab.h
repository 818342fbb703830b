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

#ifndef KKTMIA_DATA_LAB_H_
#define KKTMIA_DATA_LAB_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "kktmia/nn_engine.h"

namespace kktmia::data {

enum class Origin { kMember, kInDistNonmember, kOodNonmember };

std::string_view OriginName(Origin origin);
absl::StatusOr<Origin> ParseOrigin(std::string_view name);
inline bool IsMember(Origin origin) { return origin == Origin::kMember; }

// A generated sample together with its ground-truth origin. Only the
// scenario builder and the evaluator ever look at `origin`.
struct LabeledSample {
  uint64_t id = 0;
  Eigen::VectorXd x;
  int y = 0;
  Origin origin = Origin::kInDistNonmember;
};

// What an attacker is allowed to see: no membership tag.
struct Sample {
  uint64_t id = 0;
  Eigen::VectorXd x;
  int y = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  int d = 0;
  int num_classes = 0;
  // Features form a square grid, so mirrored views are meaningful.
  bool image_shaped = false;
};

// The superset handed to the attack.
using CandidatePool = Dataset;

// Ground-truth origin per pool sample id, in pool order.
using MembershipTruth = std::vector<std::pair<uint64_t, Origin>>;

std::vector<nn::Example> ToExamples(const Dataset& dataset);

// Isotropic Gaussian classes. Each mean is a random unit direction scaled by
// `separation`, so separation 0 makes all classes identical.
struct GaussianMixture {
  std::vector<Eigen::VectorXd> means;
  double stddev = 1.0;

  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  int num_classes() const { return static_cast<int>(means.size()); }
  // Index of the closest class mean (lowest index on ties).
  int NearestClass(const Eigen::VectorXd& x) const;
};

absl::StatusOr<GaussianMixture> MakeGaussianMixture(int d, int num_classes,
                                                    double separation,
                                                    uint64_t seed);

// `labels` fixes the class of every draw; ids are the draw indices.
std::vector<LabeledSample> SampleMixture(const GaussianMixture& mixture,
                                         const std::vector<int>& labels,
                                         uint64_t seed);

// n_per_class draws from each class, class-major order.
absl::StatusOr<std::vector<LabeledSample>> GenGaussianMixture(
    int d, int num_classes, int n_per_class, double separation, uint64_t seed);

// Distribution shift relative to the in-distribution mixture: a translation
// of `mean_shift` standard deviations along one seeded random direction and a
// multiplicative change of the standard deviation. {0, 1} is no shift.
struct OodShift {
  double mean_shift = 0.0;
  double scale = 1.0;
};

// Draws a mixture component uniformly, applies the shift, and labels the
// result with the nearest in-distribution class mean.
std::vector<LabeledSample> GenOod(const GaussianMixture& base, int n,
                                  const OodShift& shift, uint64_t seed);

enum class ScenarioKind {
  kStandard,
  kDifferentDistribution,
  kUnknownRatio,
  kPartialCoverage,
  kCombined,
};

std::string_view ScenarioKindName(ScenarioKind kind);
absl::StatusOr<ScenarioKind> ParseScenarioKind(std::string_view name);

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::kStandard;
  int d = 64;
  int num_classes = 4;
  double class_separation = 1.0;
  double stddev = 1.0;
  bool image_shaped = true;
  int n_members = 200;
  int n_in_dist_nonmembers = 200;
  int n_ood = 0;
  double coverage_fraction = 1.0;
  OodShift ood_shift;
  uint64_t seed = 0;

  absl::Status Validate() const;
  // Members that land in the pool: round(coverage * n_members).
  int PoolMembers() const;
};

struct Scenario {
  Dataset train_set;
  CandidatePool pool;
  MembershipTruth truth;
  GaussianMixture mixture;
};

// Builds the training set and the shuffled candidate pool. Sample ids are a
// seeded permutation, so neither ids nor pool order reveal membership.
absl::StatusOr<Scenario> BuildScenario(const ScenarioConfig& cfg);

// Fresh in-distribution draws (held-out test data for accuracy reports).
std::vector<LabeledSample> HeldOut(const GaussianMixture& mixture, int n,
                                   uint64_t seed);

// Sample-table file:
//
//   kktmia-dataset 1
//   d <d>
//   num_classes <C>
//   count <n>
//   seed <u64>
//   image_shaped <0|1>
//   meta <key> <value>      (zero or more)
//   end
//
// then per row: id (u64), label (u64), d float64, all little-endian.
struct DatasetFile {
  Dataset dataset;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> meta;
};

absl::Status WriteDataset(const std::string& path, const DatasetFile& file);
absl::StatusOr<DatasetFile> ReadDataset(const std::string& path);

// Membership sidecar: "kktmia-membership 1" then "sample_id,origin" rows.
absl::Status WriteMembership(const std::string& path,
                             const MembershipTruth& truth);
absl::StatusOr<MembershipTruth> ReadMembership(const std::string& path);

}  // namespace kktmia::data

#endif  // KKTMIA_DATA_LAB_H_
