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

#include "kktmia/baselines.h"

#include <algorithm>
#include <numeric>

#include "kktmia/grad_matrix.h"

namespace kktmia::baselines {
namespace {

absl::Status CheckPool(const data::CandidatePool& pool,
                       const nn::ArchSpec& arch, const nn::ParamVector& theta) {
  if (!theta.Matches(arch)) {
    return absl::InvalidArgumentError("parameter vector does not match arch");
  }
  if (pool.d != arch.input_dim || pool.num_classes != arch.num_classes) {
    return absl::InvalidArgumentError("pool dimensions do not match arch");
  }
  if (pool.samples.empty()) return absl::InvalidArgumentError("empty pool");
  return absl::OkStatus();
}

// Descending-norm ranks: the largest norm gets rank 1, ties share the mean.
std::vector<double> SmallNormHighRank(const std::vector<double>& norms) {
  const size_t n = norms.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return norms[a] > norms[b]; });
  std::vector<double> rank(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && norms[order[j + 1]] == norms[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  return rank;
}

BaselineReport StartReport(const data::CandidatePool& pool,
                           const nn::ParamVector& theta,
                           std::string_view name) {
  BaselineReport report;
  report.attack_name = std::string(name);
  for (const grad::SampleMargin& m : grad::PoolMargins(pool, theta)) {
    score::ScoreRow row;
    row.sample_id = m.sample_id;
    row.margin = m.margin;
    row.predicted_class = m.predicted_class;
    report.rows.push_back(row);
  }
  return report;
}

void SetScore(score::ScoreRow& row, double s) {
  row.final_score = row.fused = row.boosted = row.scaled = s;
}

}  // namespace

absl::StatusOr<BaselineReport> GradNormScore(const data::CandidatePool& pool,
                                             const nn::ArchSpec& arch,
                                             const nn::ParamVector& theta,
                                             GradKind kind) {
  if (absl::Status s = CheckPool(pool, arch, theta); !s.ok()) return s;
  const bool flips = pool.image_shaped && nn::GridWidth(pool.d) > 0;
  const int views = flips ? 2 : 1;
  const int n = static_cast<int>(pool.samples.size());
  const int entries = n * views;

  Eigen::MatrixXd x(pool.d, entries);
  std::vector<int> labels(entries);
  for (int i = 0; i < n; ++i) {
    x.col(i * views) = pool.samples[i].x;
    if (flips) x.col(i * views + 1) = nn::FlipHorizontal(pool.samples[i].x);
    for (int v = 0; v < views; ++v) labels[i * views + v] = pool.samples[i].y;
  }
  const Eigen::MatrixXd logits = nn::ForwardBatch(theta, x);
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(arch.num_classes, entries);
  for (int k = 0; k < entries; ++k) {
    if (kind == GradKind::kMargin) {
      upstream(labels[k], k) = 1.0;
      upstream(nn::RunnerUpClass(logits.col(k), labels[k]), k) = -1.0;
    } else {
      const Eigen::VectorXd l = logits.col(k);
      Eigen::VectorXd p = (l.array() - l.maxCoeff()).exp().matrix();
      p /= p.sum();
      p(labels[k]) -= 1.0;
      upstream.col(k) = p;
    }
  }
  const Eigen::MatrixXd grads = nn::PerSampleGradients(theta, x, upstream);

  // Ranks compare samples within one (layer, view) slot.
  std::vector<double> rank_sum(n, 0.0);
  for (const nn::LayerLayout& e : theta.layout()) {
    for (int v = 0; v < views; ++v) {
      std::vector<double> norms(n);
      for (int i = 0; i < n; ++i) {
        norms[i] = grads.col(i * views + v).segment(e.offset, e.size()).norm();
      }
      const std::vector<double> rank = SmallNormHighRank(norms);
      for (int i = 0; i < n; ++i) rank_sum[i] += rank[i];
    }
  }
  BaselineReport report = StartReport(
      pool, theta, kind == GradKind::kLoss ? "gradnorm-loss" : "gradnorm-margin");
  const double per_sample = static_cast<double>(theta.num_layers() * views);
  for (int i = 0; i < n; ++i) {
    SetScore(report.rows[i], rank_sum[i] / per_sample / n);
  }
  return report;
}

absl::StatusOr<BaselineReport> LossThresholdScore(
    const data::CandidatePool& pool, const nn::ArchSpec& arch,
    const nn::ParamVector& theta) {
  if (absl::Status s = CheckPool(pool, arch, theta); !s.ok()) return s;
  const int n = static_cast<int>(pool.samples.size());
  Eigen::MatrixXd x(pool.d, n);
  for (int i = 0; i < n; ++i) x.col(i) = pool.samples[i].x;
  const Eigen::MatrixXd logits = nn::ForwardBatch(theta, x);
  BaselineReport report = StartReport(pool, theta, "loss-threshold");
  for (int i = 0; i < n; ++i) {
    SetScore(report.rows[i],
             -nn::CrossEntropyFromLogits(logits.col(i), pool.samples[i].y));
  }
  return report;
}

}  // namespace kktmia::baselines
