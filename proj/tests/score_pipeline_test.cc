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

#include "kktmia/score_pipeline.h"

#include <cmath>
#include <filesystem>
#include <tuple>
#include <vector>

#include "gtest/gtest.h"
#include "test_util.h"

namespace kktmia::score {
namespace {

TEST(TrimmedMeanTest, DropsOneValueFromEachEnd) {
  const std::vector<double> v = {100, 2, 1, 3};
  EXPECT_DOUBLE_EQ(TrimmedMean(v, 0.25), 2.5);
  EXPECT_DOUBLE_EQ(TrimmedMean(v, 0.0), 26.5);
  // floor(0.2 * 4) = 0: nothing trimmed.
  EXPECT_DOUBLE_EQ(TrimmedMean(v, 0.2), 26.5);
}

TEST(TrimmedMeanTest, SingleOutlierBlockIsIgnored) {
  const std::vector<double> v = {1, 1, 1, 1, 50};
  EXPECT_DOUBLE_EQ(TrimmedMean(v, 0.2), 1.0);
  const std::vector<double> w = {-40, 1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(TrimmedMean(w, 0.2), 1.0);
}

TEST(TrimmedMeanTest, FallsBackToMedian) {
  const std::vector<double> odd = {5};
  EXPECT_DOUBLE_EQ(TrimmedMean(odd, 0.49), 5.0);
  const std::vector<double> two = {1, 4};
  EXPECT_DOUBLE_EQ(TrimmedMean(two, 0.49), 2.5);
}

TEST(SnrTest, MeanOverPopulationStd) {
  const std::vector<double> v = {3, 4, 5};
  EXPECT_NEAR(Snr(v, 0.0), 4.0 / std::sqrt(2.0 / 3.0), 1e-14);
  EXPECT_NEAR(Snr(v, 0.0), 4.898979485566356, 1e-12);
  const std::vector<double> flat = {2, 2};
  EXPECT_NEAR(Snr(flat, 1e-8), 2e8, 1e-3);
  const std::vector<double> zero = {-1, 1};
  EXPECT_EQ(Snr(zero, 0.0), 0.0);
}

TEST(RankZTest, TiesShareRanks) {
  const Eigen::VectorXd z = RankZ(Eigen::Vector4d(10, -3, 10, 0));
  // Ranks (3.5, 1, 3.5, 2), mean 2.5, population sd sqrt(1.125).
  const double sd = std::sqrt(1.125);
  EXPECT_NEAR(z(0), 1.0 / sd, 1e-14);
  EXPECT_NEAR(z(1), -1.5 / sd, 1e-14);
  EXPECT_EQ(z(0), z(2));
  EXPECT_EQ(RankZ(Eigen::Vector3d(1, 1, 1)), Eigen::Vector3d::Zero());
}

solver::LambdaTable TableOf(
    const std::vector<std::tuple<uint64_t, int, int, double>>& rows) {
  solver::LambdaTable t;
  for (const auto& [id, view, block, z] : rows) {
    t.entries.push_back({id, view, block, 0.0, z});
  }
  return t;
}

TEST(FuseTest, AveragesViewsThenCombinesBlocks) {
  // Sample 7: block 0 views (1, 3) -> 2, block 1 -> 4.  Sample 5: -1, -1.
  const solver::LambdaTable t = TableOf({{7, 0, 0, 1.0},
                                         {7, 1, 0, 3.0},
                                         {7, 0, 1, 4.0},
                                         {5, 0, 0, -1.0},
                                         {5, 0, 1, -1.0}});
  FusionConfig cfg;
  cfg.trim_fraction = 0.0;
  const FusedScores f = Fuse(t, cfg);
  ASSERT_EQ(f.sample_ids, std::vector<uint64_t>({5, 7}));
  EXPECT_DOUBLE_EQ(f.trimmed(0), -1.0);
  EXPECT_DOUBLE_EQ(f.trimmed(1), 3.0);
  EXPECT_NEAR(f.snr(1), 3.0 / (1.0 + cfg.epsilon_std), 1e-12);
  EXPECT_NEAR(f.fused(0), -1.0, 1e-12);
  EXPECT_NEAR(f.fused(1), 1.0, 1e-12);
}

TEST(FuseTest, SingleStatisticModes) {
  const solver::LambdaTable t = TableOf({{1, 0, 0, 1.0}, {1, 0, 1, 1.2},
                                         {2, 0, 0, 5.0}, {2, 0, 1, -3.0},
                                         {3, 0, 0, 0.0}, {3, 0, 1, 0.5}});
  FusionConfig cfg;
  cfg.trim_fraction = 0.0;
  cfg.use_snr = false;
  const FusedScores trim = Fuse(t, cfg);
  EXPECT_EQ(trim.fused, RankZ(trim.trimmed));
  cfg.use_snr = true;
  cfg.use_trim = false;
  const FusedScores snr = Fuse(t, cfg);
  EXPECT_EQ(snr.fused, RankZ(snr.snr));
  // Sample 1 is steady, sample 2 is not; SNR ranks 1 first.
  EXPECT_GT(snr.fused(0), snr.fused(1));
}

TEST(PostProcessTest, ClassBoostFavorsLowMarginClasses) {
  const Eigen::VectorXd out = ClassBoost(Eigen::Vector3d(1, 1, 1), {0, 0, 1},
                                         Eigen::Vector3d(1, 3, 6), 0.5);
  EXPECT_NEAR(out(0), 1.5, 1e-11);
  EXPECT_NEAR(out(1), 1.5, 1e-11);
  EXPECT_NEAR(out(2), 1.0, 1e-15);
  // One class: nothing to compare against.
  EXPECT_EQ(ClassBoost(Eigen::Vector2d(2, 3), {4, 4}, Eigen::Vector2d(1, 9), 0.5),
            Eigen::Vector2d(2, 3));
}

TEST(PostProcessTest, SampleBoostUsesMedianMargin) {
  const Eigen::VectorXd out =
      SampleBoost(Eigen::Vector3d(1, 1, 2), Eigen::Vector3d(1, 2, 3), 0.5);
  EXPECT_NEAR(out(0), 1.0 + 0.5 / 1.5, 1e-15);
  EXPECT_NEAR(out(1), 1.25, 1e-15);
  EXPECT_NEAR(out(2), 2.0 * 1.2, 1e-15);
}

TEST(PostProcessTest, DistanceScaleUsesTopScoredMargins) {
  const Eigen::VectorXd out = DistanceScale(
      Eigen::Vector3d(3, 2, 1), {0, 0, 0}, Eigen::Vector3d(1, 2, 4), 2, 1.0,
      1e-3);
  EXPECT_NEAR(out(0), 3 / 0.501, 1e-12);
  EXPECT_NEAR(out(1), 2 / 0.501, 1e-12);
  EXPECT_NEAR(out(2), 1 / 2.501, 1e-12);
  const Eigen::VectorXd flat = DistanceScale(
      Eigen::Vector2d(3, 2), {0, 1}, Eigen::Vector2d(1, 2), 5, 0.5, 1e-3);
  // Each class centers on its only sample: distance 0.
  EXPECT_NEAR(flat(0), 3e3, 1e-9);
  EXPECT_NEAR(flat(1), 2e3, 1e-9);
}

TEST(AblationStagesTest, CumulativeOrder) {
  const auto stages = AblationStages(FusionConfig{});
  ASSERT_EQ(stages.size(), 6u);
  const std::vector<std::string> names = {"trim-only", "snr-only", "fusion",
                                          "+boost1",  "+boost2",  "+distance"};
  for (size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(stages[i].first, names[i]);
    KKT_EXPECT_OK(stages[i].second.Validate());
  }
  EXPECT_FALSE(stages[0].second.use_snr);
  EXPECT_FALSE(stages[1].second.use_trim);
  EXPECT_FALSE(stages[2].second.boost_class);
  EXPECT_TRUE(stages[3].second.boost_class);
  EXPECT_FALSE(stages[3].second.boost_sample);
  EXPECT_TRUE(stages[4].second.boost_sample);
  EXPECT_FALSE(stages[4].second.distance_scale);
  EXPECT_TRUE(stages[5].second.distance_scale);
}

TEST(FusionConfigTest, Validation) {
  FusionConfig c;
  KKT_EXPECT_OK(c.Validate());
  c.trim_fraction = 0.5;
  EXPECT_FALSE(c.Validate().ok());
  c = {};
  c.w_trim = 0.7;
  EXPECT_FALSE(c.Validate().ok());
  c = {};
  c.use_trim = c.use_snr = false;
  EXPECT_FALSE(c.Validate().ok());
  c = {};
  c.top_k = 0;
  EXPECT_FALSE(c.Validate().ok());
}

std::vector<grad::SampleMargin> ThreeSamples() {
  // Sample 30 was misclassified and never reached the solver.
  return {{10, 0, 0, 1.0}, {30, 1, 0, -0.5}, {20, 1, 1, 2.0}};
}

TEST(BuildScoreReportTest, SentinelForSamplesWithoutCoefficients) {
  const solver::LambdaTable t =
      TableOf({{10, 0, 0, 2.0}, {20, 0, 0, -2.0}});
  FusionConfig cfg;
  cfg.boost_class = cfg.boost_sample = cfg.distance_scale = false;
  const ScoreReport r = BuildScoreReport(ThreeSamples(), t, cfg);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[0].sample_id, 10u);
  EXPECT_EQ(r.rows[1].sample_id, 30u);
  EXPECT_TRUE(IsSentinel(r.rows[1].final_score));
  EXPECT_TRUE(IsSentinel(r.rows[1].fused));
  EXPECT_EQ(r.rows[1].margin, -0.5);
  // Shifted fused scores: fused (1, -1) -> (3, 1).
  EXPECT_NEAR(r.rows[0].final_score, 3.0, 1e-12);
  EXPECT_NEAR(r.rows[2].final_score, 1.0, 1e-12);
  EXPECT_GT(r.rows[2].final_score, kSentinelScore);
}

TEST(BuildScoreReportTest, StagesComposeInOrder) {
  const solver::LambdaTable t =
      TableOf({{10, 0, 0, 2.0}, {20, 0, 0, -2.0}});
  const FusionConfig cfg;
  const ScoreReport r = BuildScoreReport(ThreeSamples(), t, cfg);
  const Eigen::Vector2d shifted(3.0, 1.0);
  const std::vector<int> classes = {0, 1};
  const Eigen::Vector2d margins(1.0, 2.0);
  const Eigen::VectorXd boosted = SampleBoost(
      ClassBoost(shifted, classes, margins, cfg.gamma), margins, cfg.delta);
  const Eigen::VectorXd scaled = DistanceScale(
      boosted, classes, margins, cfg.top_k, cfg.eta, cfg.eps_div);
  EXPECT_NEAR(r.rows[0].boosted, boosted(0), 1e-12);
  EXPECT_NEAR(r.rows[2].boosted, boosted(1), 1e-12);
  EXPECT_NEAR(r.rows[0].final_score, scaled(0), 1e-9);
  EXPECT_EQ(r.rows[0].scaled, r.rows[0].final_score);
}

TEST(ScoreReportFileTest, RoundTripIsExact) {
  ScoreReport r = BuildScoreReport(
      ThreeSamples(), TableOf({{10, 0, 0, 0.3}, {20, 0, 0, -0.1}}),
      FusionConfig{});
  r.metadata = {{"seed", "4"}, {"note", "a, b"}};
  const std::string csv = ::testing::TempDir() + "/scores.csv";
  const std::string json = ::testing::TempDir() + "/scores.json";
  KKT_ASSERT_OK(WriteScoreReport(csv, json, r));
  absl::StatusOr<ScoreReport> back = ReadScoreReport(csv, json);
  KKT_ASSERT_OK(back.status());
  EXPECT_EQ(back->attack_name, "impmia");
  EXPECT_EQ(back->metadata, r.metadata);
  ASSERT_EQ(back->rows.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back->rows[i].sample_id, r.rows[i].sample_id);
    EXPECT_EQ(back->rows[i].final_score, r.rows[i].final_score);
    EXPECT_EQ(back->rows[i].fused, r.rows[i].fused);
    EXPECT_EQ(back->rows[i].margin, r.rows[i].margin);
    EXPECT_EQ(back->rows[i].predicted_class, r.rows[i].predicted_class);
  }
  EXPECT_TRUE(IsSentinel(back->rows[1].final_score));

  std::filesystem::remove(json);
  EXPECT_EQ(ReadScoreReport(csv, json).status().code(),
            absl::StatusCode::kNotFound);
}

}  // namespace
}  // namespace kktmia::score
