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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace kktmia::eval {
namespace {

absl::Status CheckInputs(std::span<const double> scores,
                         const std::vector<bool>& is_member) {
  if (scores.size() != is_member.size()) {
    return absl::InvalidArgumentError("scores and truth differ in length");
  }
  const auto members = std::count(is_member.begin(), is_member.end(), true);
  if (members == 0 || members == static_cast<int64_t>(is_member.size())) {
    return absl::InvalidArgumentError(
        "evaluation needs at least one member and one non-member");
  }
  for (double s : scores) {
    if (std::isnan(s)) return absl::InvalidArgumentError("NaN score");
  }
  return absl::OkStatus();
}

std::string TargetName(double target) {
  return absl::StrFormat("tpr@%g", target);
}

}  // namespace

absl::StatusOr<MetricsReport> RocAndAuc(std::span<const double> scores,
                                        const std::vector<bool>& is_member) {
  if (absl::Status s = CheckInputs(scores, is_member); !s.ok()) return s;
  MetricsReport r;
  for (bool m : is_member) (m ? r.n_members : r.n_nonmembers) += 1;

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  r.roc.push_back({0.0, 0.0});
  int64_t tp = 0, fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double value = scores[order[i]];
    if (score::IsSentinel(value)) break;
    size_t j = i;
    while (j < order.size() && scores[order[j]] == value) {
      (is_member[order[j]] ? tp : fp) += 1;
      ++j;
    }
    r.roc.push_back({static_cast<double>(fp) / r.n_nonmembers,
                     static_cast<double>(tp) / r.n_members});
    i = j;
  }
  if (r.roc.back().fpr != 1.0 || r.roc.back().tpr != 1.0) {
    r.roc.push_back({1.0, 1.0});
  }
  double area = 0.0;
  for (size_t k = 1; k < r.roc.size(); ++k) {
    area += (r.roc[k].fpr - r.roc[k - 1].fpr) *
            (r.roc[k].tpr + r.roc[k - 1].tpr) * 0.5;
  }
  r.auc = area;
  return r;
}

absl::StatusOr<TprPoint> TprAtFpr(std::span<const double> scores,
                                  const std::vector<bool>& is_member,
                                  double fpr_target) {
  if (absl::Status s = CheckInputs(scores, is_member); !s.ok()) return s;
  if (!(fpr_target >= 0 && fpr_target <= 1)) {
    return absl::InvalidArgumentError("fpr target must lie in [0, 1]");
  }
  std::vector<double> negatives;
  int64_t n_members = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (is_member[i]) {
      ++n_members;
    } else {
      negatives.push_back(scores[i]);
    }
  }
  std::sort(negatives.begin(), negatives.end(), std::greater<>());
  const int64_t n_neg = static_cast<int64_t>(negatives.size());
  TprPoint p;
  p.fpr_target = fpr_target;
  p.allowed_false_positives = static_cast<int64_t>(
      std::floor(fpr_target * static_cast<double>(n_neg) + 1e-9));
  // Never below the sentinel, so sentinel scores stay negative.
  p.threshold = p.allowed_false_positives >= n_neg
                    ? score::kSentinelScore
                    : std::max(negatives[p.allowed_false_positives],
                               score::kSentinelScore);
  int64_t tp = 0, fp = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > p.threshold) (is_member[i] ? tp : fp) += 1;
  }
  p.tpr = static_cast<double>(tp) / n_members;
  p.achieved_fpr = static_cast<double>(fp) / n_neg;
  return p;
}

std::vector<double> DefaultFprTargets() { return {0.0, 0.005, 0.01, 0.05}; }

absl::StatusOr<MetricsReport> Evaluate(std::span<const double> scores,
                                       const std::vector<bool>& is_member,
                                       const std::vector<double>& fpr_targets) {
  absl::StatusOr<MetricsReport> r = RocAndAuc(scores, is_member);
  if (!r.ok()) return r.status();
  for (double t : fpr_targets) {
    absl::StatusOr<TprPoint> p = TprAtFpr(scores, is_member, t);
    if (!p.ok()) return p.status();
    r->tpr_at.push_back(*p);
  }
  return r;
}

absl::Status JoinTruth(const score::ScoreReport& report,
                       const data::MembershipTruth& truth,
                       std::vector<double>* scores,
                       std::vector<bool>* is_member) {
  std::unordered_map<uint64_t, data::Origin> origin;
  for (const auto& [id, o] : truth) origin[id] = o;
  scores->clear();
  is_member->clear();
  for (const score::ScoreRow& row : report.rows) {
    auto it = origin.find(row.sample_id);
    if (it == origin.end()) {
      return absl::InvalidArgumentError(
          absl::StrCat("sample ", row.sample_id, " has no membership tag"));
    }
    scores->push_back(row.final_score);
    is_member->push_back(data::IsMember(it->second));
  }
  return absl::OkStatus();
}

const MetricSummary* AggregateReport::Find(const std::string& name) const {
  for (const MetricSummary& m : metrics) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

MetricSummary Summarize(std::string name, std::vector<double> values) {
  MetricSummary m;
  m.name = std::move(name);
  const double n = static_cast<double>(values.size());
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  m.values = std::move(values);
  return m;
}

absl::StatusOr<AggregateReport> AggregateSeeds(
    const std::vector<MetricsReport>& reports) {
  if (reports.empty()) {
    return absl::InvalidArgumentError("no reports to aggregate");
  }
  const size_t targets = reports[0].tpr_at.size();
  for (const MetricsReport& r : reports) {
    if (r.tpr_at.size() != targets) {
      return absl::InvalidArgumentError("reports use different FPR targets");
    }
    for (size_t k = 0; k < targets; ++k) {
      if (r.tpr_at[k].fpr_target != reports[0].tpr_at[k].fpr_target) {
        return absl::InvalidArgumentError("reports use different FPR targets");
      }
    }
  }
  AggregateReport agg;
  agg.num_seeds = static_cast<int>(reports.size());
  std::vector<double> auc;
  for (const MetricsReport& r : reports) auc.push_back(r.auc);
  agg.metrics.push_back(Summarize("auc", auc));
  for (size_t k = 0; k < targets; ++k) {
    std::vector<double> tpr;
    for (const MetricsReport& r : reports) tpr.push_back(r.tpr_at[k].tpr);
    agg.metrics.push_back(
        Summarize(TargetName(reports[0].tpr_at[k].fpr_target), tpr));
  }
  return agg;
}

nlohmann::ordered_json ToJson(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["auc"] = report.auc;
  j["n_members"] = report.n_members;
  j["n_nonmembers"] = report.n_nonmembers;
  nlohmann::ordered_json tprs = nlohmann::ordered_json::array();
  for (const TprPoint& p : report.tpr_at) {
    nlohmann::ordered_json e;
    e["fpr_target"] = p.fpr_target;
    e["allowed_false_positives"] = p.allowed_false_positives;
    e["achieved_fpr"] = p.achieved_fpr;
    e["tpr"] = p.tpr;
    e["threshold"] = p.threshold;
    tprs.push_back(e);
  }
  j["tpr_at"] = tprs;
  j["fpr_zero_reading"] =
      "a target of 0 admits zero false positives (threshold strictly above "
      "the highest non-member score)";
  return j;
}

nlohmann::ordered_json ToJson(const AggregateReport& report) {
  nlohmann::ordered_json j;
  j["num_seeds"] = report.num_seeds;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const MetricSummary& m : report.metrics) {
    nlohmann::ordered_json e;
    e["mean"] = m.mean;
    e["standard_error"] = m.standard_error;
    e["values"] = m.values;
    metrics[m.name] = e;
  }
  j["metrics"] = metrics;
  return j;
}

absl::Status WriteRocCsv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path));
  out << "fpr,tpr\n";
  for (const RocPoint& p : report.roc) {
    out << absl::StrFormat("%.17g,%.17g\n", p.fpr, p.tpr);
  }
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

}  // namespace kktmia::eval
