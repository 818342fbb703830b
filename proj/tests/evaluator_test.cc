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

#include "kktmia/evaluator.h"

#include <cmath>
#include <fstream>
#include <algorithm>
#include <random>

#include "gtest/gtest.h"
#include "test_util.h"

namespace kktmia::eval {
namespace {

using ::kktmia::testing::BruteForceAuc;
using ::kktmia::testing::BruteForceTprAtFpr;

TEST(RocTest, SmallExample) {
  const std::vector<double> s = {0.9, 0.7, 0.8, 0.2, 0.3};
  const std::vector<bool> m = {true, false, true, false, true};
  absl::StatusOr<MetricsReport> r = RocAndAuc(s, m);
  KKT_ASSERT_OK(r.status());
  EXPECT_NEAR(r->auc, 5.0 / 6.0, 1e-15);
  EXPECT_EQ(r->n_members, 3);
  EXPECT_EQ(r->n_nonmembers, 2);
  EXPECT_EQ(r->roc.front().fpr, 0.0);
  EXPECT_EQ(r->roc.back().tpr, 1.0);
}

TEST(RocTest, AllTiedIsChance) {
  const std::vector<double> s(10, 1.5);
  std::vector<bool> m(10, false);
  for (int i = 0; i < 4; ++i) m[i] = true;
  absl::StatusOr<MetricsReport> r = RocAndAuc(s, m);
  KKT_ASSERT_OK(r.status());
  EXPECT_NEAR(r->auc, 0.5, 1e-15);
}

TEST(RocTest, MatchesPairwiseCountOnRandomFixtures) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> coarse(0, 6);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 60;
    std::vector<double> s(n);
    std::vector<bool> m(n);
    for (int i = 0; i < n; ++i) {
      const int v = coarse(rng);
      // Value 0 stands for "never scored".
      s[i] = v == 0 ? score::kSentinelScore : 0.25 * v;
      m[i] = coin(rng);
    }
    m[0] = true;
    m[1] = false;
    absl::StatusOr<MetricsReport> r = Evaluate(s, m, DefaultFprTargets());
    KKT_ASSERT_OK(r.status());
    EXPECT_NEAR(r->auc, BruteForceAuc(s, m), 1e-12) << "trial " << trial;
    for (const TprPoint& p : r->tpr_at) {
      EXPECT_DOUBLE_EQ(p.tpr, BruteForceTprAtFpr(s, m, p.fpr_target,
                                                 score::kSentinelScore))
          << "trial " << trial << " target " << p.fpr_target;
      EXPECT_LE(p.achieved_fpr * (n - std::count(m.begin(), m.end(), true)),
                p.allowed_false_positives + 1e-9);
    }
  }
}

TEST(TprAtFprTest, ZeroTargetAdmitsNoFalsePositives) {
  const std::vector<double> s = {5, 4, 3, 2, 1, 0};
  const std::vector<bool> m = {true, true, false, true, false, false};
  absl::StatusOr<TprPoint> p = TprAtFpr(s, m, 0.0);
  KKT_ASSERT_OK(p.status());
  EXPECT_EQ(p->achieved_fpr, 0.0);
  EXPECT_EQ(p->threshold, 3.0);
  EXPECT_NEAR(p->tpr, 2.0 / 3.0, 1e-15);
}

TEST(TprAtFprTest, AllowedCountFromTwoHundredNonMembers) {
  // 200 non-members scored 0..199, 10 members at 150.5 .. 159.5 and 10 at
  // 300 .. 309.
  std::vector<double> s;
  std::vector<bool> m;
  for (int i = 0; i < 200; ++i) {
    s.push_back(i);
    m.push_back(false);
  }
  for (int i = 0; i < 10; ++i) {
    s.push_back(150.5 + i);
    m.push_back(true);
    s.push_back(300 + i);
    m.push_back(true);
  }
  absl::StatusOr<MetricsReport> r = Evaluate(s, m, {0.0, 0.005, 0.01, 0.05});
  KKT_ASSERT_OK(r.status());
  EXPECT_EQ(r->tpr_at[0].allowed_false_positives, 0);
  EXPECT_EQ(r->tpr_at[1].allowed_false_positives, 1);
  EXPECT_EQ(r->tpr_at[2].allowed_false_positives, 2);
  EXPECT_EQ(r->tpr_at[3].allowed_false_positives, 10);
  EXPECT_DOUBLE_EQ(r->tpr_at[0].tpr, 0.5);
  EXPECT_DOUBLE_EQ(r->tpr_at[1].achieved_fpr, 0.005);
  // 10 false positives above 189: members 150.5.. are all below.
  EXPECT_DOUBLE_EQ(r->tpr_at[3].tpr, 0.5);
  EXPECT_DOUBLE_EQ(r->tpr_at[3].achieved_fpr, 0.05);
}

TEST(TprAtFprTest, SentinelIsNeverPositive) {
  const double lo = score::kSentinelScore;
  const std::vector<double> s = {lo, lo, 1.0};
  const std::vector<bool> m = {true, false, false};
  absl::StatusOr<TprPoint> p = TprAtFpr(s, m, 1.0);
  KKT_ASSERT_OK(p.status());
  EXPECT_EQ(p->tpr, 0.0);
}

TEST(EvaluateTest, RejectsBadInputs) {
  EXPECT_FALSE(RocAndAuc(std::vector<double>{1, 2}, {true, true}).ok());
  EXPECT_FALSE(RocAndAuc(std::vector<double>{1, 2}, {true}).ok());
  EXPECT_FALSE(RocAndAuc(std::vector<double>{1, NAN}, {true, false}).ok());
  EXPECT_FALSE(TprAtFpr(std::vector<double>{1, 2}, {true, false}, 1.5).ok());
}

TEST(AggregateTest, MeanAndStandardError) {
  std::vector<MetricsReport> reports(3);
  const double aucs[] = {0.1, 0.2, 0.3};
  for (int i = 0; i < 3; ++i) {
    reports[i].auc = aucs[i];
    reports[i].tpr_at = {{0.0, 0, 0.0, 0.5 * i, 0.0}};
  }
  absl::StatusOr<AggregateReport> agg = AggregateSeeds(reports);
  KKT_ASSERT_OK(agg.status());
  EXPECT_EQ(agg->num_seeds, 3);
  const MetricSummary* auc = agg->Find("auc");
  ASSERT_NE(auc, nullptr);
  EXPECT_NEAR(auc->mean, 0.2, 1e-15);
  EXPECT_NEAR(auc->standard_error, 0.1 / std::sqrt(3.0), 1e-15);
  const MetricSummary* tpr = agg->Find("tpr@0");
  ASSERT_NE(tpr, nullptr);
  EXPECT_NEAR(tpr->mean, 0.5, 1e-15);
  EXPECT_EQ(agg->Find("tpr@0.5"), nullptr);
  EXPECT_EQ(Summarize("x", {4.0}).standard_error, 0.0);

  reports[1].tpr_at[0].fpr_target = 0.01;
  EXPECT_FALSE(AggregateSeeds(reports).ok());
  EXPECT_FALSE(AggregateSeeds({}).ok());
}

TEST(JoinTruthTest, LinesUpById) {
  score::ScoreReport r;
  r.rows.push_back({5, 0.5});
  r.rows.push_back({2, -1.0});
  const data::MembershipTruth truth = {{2, data::Origin::kMember},
                                       {5, data::Origin::kOodNonmember}};
  std::vector<double> s;
  std::vector<bool> m;
  KKT_ASSERT_OK(JoinTruth(r, truth, &s, &m));
  EXPECT_EQ(s, std::vector<double>({0.5, -1.0}));
  EXPECT_EQ(m, std::vector<bool>({false, true}));
  r.rows.push_back({9, 0.0});
  EXPECT_FALSE(JoinTruth(r, truth, &s, &m).ok());
}

TEST(OutputTest, JsonAndRocCsv) {
  const std::vector<double> s = {0.9, 0.1, 0.5};
  const std::vector<bool> m = {true, false, false};
  absl::StatusOr<MetricsReport> r = Evaluate(s, m, {0.0});
  KKT_ASSERT_OK(r.status());
  const nlohmann::ordered_json j = ToJson(*r);
  EXPECT_EQ(j["auc"].get<double>(), 1.0);
  EXPECT_EQ(j["tpr_at"][0]["tpr"].get<double>(), 1.0);
  const std::string path = ::testing::TempDir() + "/roc.csv";
  KKT_ASSERT_OK(WriteRocCsv(path, *r));
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "fpr,tpr");
}

}  // namespace
}  // namespace kktmia::eval
