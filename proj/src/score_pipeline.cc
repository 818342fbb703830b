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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "json.hpp"

namespace kktmia::score {

absl::Status FusionConfig::Validate() const {
  if (!(trim_fraction >= 0 && trim_fraction < 0.5)) {
    return absl::InvalidArgumentError("trim_fraction must lie in [0, 0.5)");
  }
  if (!use_trim && !use_snr) {
    return absl::InvalidArgumentError("at least one fusion statistic is needed");
  }
  if (use_trim && use_snr) {
    if (!(w_trim >= 0 && w_snr >= 0) ||
        std::abs(w_trim + w_snr - 1.0) > 1e-12) {
      return absl::InvalidArgumentError(
          "fusion weights must be nonnegative and sum to 1");
    }
  }
  if (!(gamma >= 0 && delta >= 0 && eta >= 0)) {
    return absl::InvalidArgumentError("gamma, delta and eta must be >= 0");
  }
  if (!(eps_div > 0) || !(epsilon_std >= 0)) {
    return absl::InvalidArgumentError("eps_div must be > 0, epsilon_std >= 0");
  }
  if (top_k < 1) return absl::InvalidArgumentError("top_k must be >= 1");
  return absl::OkStatus();
}

double TrimmedMean(std::span<const double> values, double trim_fraction) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  const size_t cut = static_cast<size_t>(std::floor(trim_fraction * n));
  if (2 * cut >= n) {
    return n % 2 == 1 ? sorted[n / 2]
                      : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  const double sum =
      std::accumulate(sorted.begin() + cut, sorted.end() - cut, 0.0);
  return sum / static_cast<double>(n - 2 * cut);
}

double Snr(std::span<const double> values, double epsilon_std) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double denom = std::sqrt(ss / n) + epsilon_std;
  if (mean == 0.0) return 0.0;
  return mean / denom;
}

Eigen::VectorXd RankZ(const Eigen::VectorXd& v) {
  const int64_t n = v.size();
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return v(a) < v(b); });
  Eigen::VectorXd ranks(n);
  for (int64_t i = 0; i < n;) {
    int64_t j = i;
    while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (int64_t k = i; k <= j; ++k) ranks(order[k]) = avg;
    i = j + 1;
  }
  return solver::ZScore(ranks);
}

FusedScores Fuse(const solver::LambdaTable& table, const FusionConfig& cfg) {
  // sample -> block -> (sum, count) over views.
  std::map<uint64_t, std::map<int, std::pair<double, int>>> acc;
  for (const solver::LambdaEntry& e : table.entries) {
    auto& cell = acc[e.sample_id][e.block_id];
    cell.first += e.z;
    cell.second += 1;
  }
  FusedScores out;
  const int64_t n = static_cast<int64_t>(acc.size());
  out.trimmed.resize(n);
  out.snr.resize(n);
  int64_t i = 0;
  for (const auto& [id, blocks] : acc) {
    std::vector<double> per_block;
    per_block.reserve(blocks.size());
    for (const auto& [block, cell] : blocks) {
      per_block.push_back(cell.first / cell.second);
    }
    out.sample_ids.push_back(id);
    out.trimmed(i) = TrimmedMean(per_block, cfg.trim_fraction);
    out.snr(i) = Snr(per_block, cfg.epsilon_std);
    ++i;
  }
  if (cfg.use_trim && cfg.use_snr) {
    out.fused = cfg.w_trim * RankZ(out.trimmed) + cfg.w_snr * RankZ(out.snr);
  } else if (cfg.use_trim) {
    out.fused = RankZ(out.trimmed);
  } else {
    out.fused = RankZ(out.snr);
  }
  return out;
}

Eigen::VectorXd ClassBoost(const Eigen::VectorXd& scores,
                           const std::vector<int>& classes,
                           const Eigen::VectorXd& margins, double gamma) {
  constexpr double kEps = 1e-12;
  std::map<int, std::pair<double, int>> sums;
  for (int64_t i = 0; i < scores.size(); ++i) {
    sums[classes[i]].first += margins(i);
    sums[classes[i]].second += 1;
  }
  if (sums.size() < 2) return scores;
  std::map<int, double> mean;
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& [c, s] : sums) {
    mean[c] = s.first / s.second;
    hi = std::max(hi, mean[c]);
    lo = std::min(lo, mean[c]);
  }
  Eigen::VectorXd out = scores;
  for (int64_t i = 0; i < scores.size(); ++i) {
    out(i) *= 1.0 + gamma * (hi - mean[classes[i]]) / (hi - lo + kEps);
  }
  return out;
}

Eigen::VectorXd SampleBoost(const Eigen::VectorXd& scores,
                            const Eigen::VectorXd& margins, double delta) {
  if (scores.size() == 0) return scores;
  std::vector<double> sorted(margins.data(), margins.data() + margins.size());
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  const double median =
      n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const double s = std::max(median, 1e-12);
  Eigen::VectorXd out = scores;
  for (int64_t i = 0; i < scores.size(); ++i) {
    out(i) *= 1.0 + delta / (1.0 + margins(i) / s);
  }
  return out;
}

Eigen::VectorXd DistanceScale(const Eigen::VectorXd& scores,
                              const std::vector<int>& classes,
                              const Eigen::VectorXd& margins, int top_k,
                              double eta, double eps_div) {
  std::map<int, std::vector<int64_t>> members;
  for (int64_t i = 0; i < scores.size(); ++i) members[classes[i]].push_back(i);
  std::map<int, double> center;
  for (auto& [c, idx] : members) {
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
      return scores(a) > scores(b);
    });
    const size_t k = std::min<size_t>(top_k, idx.size());
    double sum = 0.0;
    for (size_t j = 0; j < k; ++j) sum += margins(idx[j]);
    center[c] = sum / static_cast<double>(k);
  }
  Eigen::VectorXd out = scores;
  for (int64_t i = 0; i < scores.size(); ++i) {
    const double dist = std::abs(margins(i) - center[classes[i]]);
    out(i) /= std::pow(dist, eta) + eps_div;
  }
  return out;
}

std::vector<std::pair<std::string, FusionConfig>> AblationStages(
    const FusionConfig& base) {
  FusionConfig plain = base;
  plain.use_trim = true;
  plain.use_snr = true;
  plain.boost_class = false;
  plain.boost_sample = false;
  plain.distance_scale = false;

  std::vector<std::pair<std::string, FusionConfig>> stages;
  FusionConfig c = plain;
  c.use_snr = false;
  stages.emplace_back("trim-only", c);
  c = plain;
  c.use_trim = false;
  stages.emplace_back("snr-only", c);
  c = plain;
  stages.emplace_back("fusion", c);
  c.boost_class = true;
  stages.emplace_back("+boost1", c);
  c.boost_sample = true;
  stages.emplace_back("+boost2", c);
  c.distance_scale = true;
  stages.emplace_back("+distance", c);
  return stages;
}

ScoreReport BuildScoreReport(const std::vector<grad::SampleMargin>& margins,
                             const solver::LambdaTable& table,
                             const FusionConfig& cfg) {
  ScoreReport report;
  report.attack_name = "impmia";
  std::map<uint64_t, size_t> row_of;
  for (const grad::SampleMargin& m : margins) {
    row_of[m.sample_id] = report.rows.size();
    ScoreRow row;
    row.sample_id = m.sample_id;
    row.margin = m.margin;
    row.predicted_class = m.predicted_class;
    report.rows.push_back(row);
  }

  const FusedScores fused = Fuse(table, cfg);
  std::vector<size_t> rows;
  std::vector<int> classes;
  Eigen::VectorXd sample_margins(static_cast<int64_t>(fused.sample_ids.size()));
  for (size_t i = 0; i < fused.sample_ids.size(); ++i) {
    const size_t r = row_of.at(fused.sample_ids[i]);
    rows.push_back(r);
    classes.push_back(margins[r].label);
    sample_margins(static_cast<int64_t>(i)) = margins[r].margin;
  }
  if (rows.empty()) return report;

  Eigen::VectorXd score = fused.fused.array() - fused.fused.minCoeff() + 1.0;
  if (cfg.boost_class) score = ClassBoost(score, classes, sample_margins, cfg.gamma);
  if (cfg.boost_sample) score = SampleBoost(score, sample_margins, cfg.delta);
  const Eigen::VectorXd boosted = score;
  if (cfg.distance_scale) {
    score = DistanceScale(score, classes, sample_margins, cfg.top_k, cfg.eta,
                          cfg.eps_div);
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    ScoreRow& row = report.rows[rows[i]];
    const int64_t k = static_cast<int64_t>(i);
    row.fused = fused.fused(k);
    row.boosted = boosted(k);
    row.scaled = score(k);
    row.final_score = score(k);
  }
  return report;
}

absl::Status WriteScoreReport(const std::string& csv_path,
                              const std::string& json_path,
                              const ScoreReport& report) {
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) return absl::UnavailableError(absl::StrCat("cannot open ", csv_path));
  csv << "sample_id,final_score,fused,boosted,scaled,margin,predicted_class\n";
  for (const ScoreRow& r : report.rows) {
    csv << absl::StrFormat("%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.sample_id,
                           r.final_score, r.fused, r.boosted, r.scaled,
                           r.margin, r.predicted_class);
  }
  if (!csv) return absl::DataLossError(absl::StrCat("write failed: ", csv_path));

  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  meta["attack_name"] = report.attack_name;
  meta["sentinel_score"] = kSentinelScore;
  nlohmann::ordered_json kv = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.metadata) kv[k] = v;
  meta["metadata"] = kv;
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) return absl::UnavailableError(absl::StrCat("cannot open ", json_path));
  js << meta.dump(2) << "\n";
  if (!js) return absl::DataLossError(absl::StrCat("write failed: ", json_path));
  return absl::OkStatus();
}

absl::StatusOr<ScoreReport> ReadScoreReport(const std::string& csv_path,
                                            const std::string& json_path) {
  ScoreReport report;
  std::ifstream js(json_path);
  if (!js) return absl::NotFoundError(absl::StrCat("cannot open ", json_path));
  nlohmann::ordered_json meta =
      nlohmann::ordered_json::parse(js, nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded() || !meta.contains("attack_name")) {
    return absl::DataLossError(absl::StrCat(json_path, ": bad report metadata"));
  }
  report.attack_name = meta["attack_name"].get<std::string>();
  if (meta.contains("metadata")) {
    for (const auto& [k, v] : meta["metadata"].items()) {
      report.metadata.emplace_back(k, v.get<std::string>());
    }
  }

  std::ifstream csv(csv_path);
  if (!csv) return absl::NotFoundError(absl::StrCat("cannot open ", csv_path));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f = absl::StrSplit(line, ',');
    ScoreRow r;
    if (f.size() != 7 || !absl::SimpleAtoi(f[0], &r.sample_id) ||
        !absl::SimpleAtod(f[1], &r.final_score) ||
        !absl::SimpleAtod(f[2], &r.fused) ||
        !absl::SimpleAtod(f[3], &r.boosted) ||
        !absl::SimpleAtod(f[4], &r.scaled) ||
        !absl::SimpleAtod(f[5], &r.margin) ||
        !absl::SimpleAtoi(f[6], &r.predicted_class)) {
      return absl::DataLossError(
          absl::StrCat(csv_path, ": bad row '", line, "'"));
    }
    report.rows.push_back(r);
  }
  return report;
}

}  // namespace kktmia::score
