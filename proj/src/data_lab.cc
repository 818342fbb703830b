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

#include "kktmia/data_lab.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "kktmia/binary_io.h"
#include "kktmia/seeding.h"

namespace kktmia::data {
namespace {

Eigen::VectorXd GaussianVector(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = normal(rng);
  return v;
}

Eigen::VectorXd RandomDirection(int d, std::mt19937_64& rng) {
  Eigen::VectorXd v = GaussianVector(d, rng);
  while (v.norm() == 0.0) v = GaussianVector(d, rng);
  return v.normalized();
}

Sample Strip(const LabeledSample& s) { return {s.id, s.x, s.y}; }

}  // namespace

std::string_view OriginName(Origin origin) {
  switch (origin) {
    case Origin::kMember:
      return "member";
    case Origin::kInDistNonmember:
      return "in_dist_nonmember";
    case Origin::kOodNonmember:
      return "ood_nonmember";
  }
  return "unknown";
}

absl::StatusOr<Origin> ParseOrigin(std::string_view name) {
  if (name == "member") return Origin::kMember;
  if (name == "in_dist_nonmember") return Origin::kInDistNonmember;
  if (name == "ood_nonmember") return Origin::kOodNonmember;
  return absl::InvalidArgumentError(absl::StrCat("unknown origin '", std::string(name), "'"));
}

std::vector<nn::Example> ToExamples(const Dataset& dataset) {
  std::vector<nn::Example> out;
  out.reserve(dataset.samples.size());
  for (const Sample& s : dataset.samples) out.push_back({s.x, s.y});
  return out;
}

int GaussianMixture::NearestClass(const Eigen::VectorXd& x) const {
  int best = 0;
  double best_dist = (x - means[0]).squaredNorm();
  for (int c = 1; c < num_classes(); ++c) {
    const double dist = (x - means[c]).squaredNorm();
    if (dist < best_dist) {
      best = c;
      best_dist = dist;
    }
  }
  return best;
}

absl::StatusOr<GaussianMixture> MakeGaussianMixture(int d, int num_classes,
                                                    double separation,
                                                    uint64_t seed) {
  if (d < 1 || num_classes < 2) {
    return absl::InvalidArgumentError("need d >= 1 and num_classes >= 2");
  }
  if (!(separation >= 0)) {
    return absl::InvalidArgumentError("class separation must be nonnegative");
  }
  std::mt19937_64 rng(seed);
  GaussianMixture mixture;
  for (int c = 0; c < num_classes; ++c) {
    mixture.means.push_back(separation * RandomDirection(d, rng));
  }
  return mixture;
}

std::vector<LabeledSample> SampleMixture(const GaussianMixture& mixture,
                                         const std::vector<int>& labels,
                                         uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledSample> out;
  out.reserve(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    out.push_back({static_cast<uint64_t>(i),
                   mixture.means[y] +
                       mixture.stddev * GaussianVector(mixture.dim(), rng),
                   y, Origin::kInDistNonmember});
  }
  return out;
}

absl::StatusOr<std::vector<LabeledSample>> GenGaussianMixture(
    int d, int num_classes, int n_per_class, double separation,
    uint64_t seed) {
  if (n_per_class < 1) {
    return absl::InvalidArgumentError("n_per_class must be >= 1");
  }
  absl::StatusOr<GaussianMixture> mixture =
      MakeGaussianMixture(d, num_classes, separation, DeriveSeed(seed, "means"));
  if (!mixture.ok()) return mixture.status();
  std::vector<int> labels;
  for (int c = 0; c < num_classes; ++c) labels.insert(labels.end(), n_per_class, c);
  return SampleMixture(*mixture, labels, DeriveSeed(seed, "draws"));
}

std::vector<LabeledSample> GenOod(const GaussianMixture& base, int n,
                                  const OodShift& shift, uint64_t seed) {
  std::vector<LabeledSample> out;
  if (n <= 0) return out;
  std::mt19937_64 rng(seed);
  const Eigen::VectorXd direction = RandomDirection(base.dim(), rng);
  const Eigen::VectorXd offset = shift.mean_shift * base.stddev * direction;
  std::uniform_int_distribution<int> component(0, base.num_classes() - 1);
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int c = component(rng);
    Eigen::VectorXd x = base.means[c] + offset +
                        shift.scale * base.stddev * GaussianVector(base.dim(), rng);
    const int y = base.NearestClass(x);
    out.push_back({static_cast<uint64_t>(i), std::move(x), y,
                   Origin::kOodNonmember});
  }
  return out;
}

std::string_view ScenarioKindName(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kStandard:
      return "standard";
    case ScenarioKind::kDifferentDistribution:
      return "different_distribution";
    case ScenarioKind::kUnknownRatio:
      return "unknown_ratio";
    case ScenarioKind::kPartialCoverage:
      return "partial_coverage";
    case ScenarioKind::kCombined:
      return "combined";
  }
  return "unknown";
}

absl::StatusOr<ScenarioKind> ParseScenarioKind(std::string_view name) {
  for (ScenarioKind k :
       {ScenarioKind::kStandard, ScenarioKind::kDifferentDistribution,
        ScenarioKind::kUnknownRatio, ScenarioKind::kPartialCoverage,
        ScenarioKind::kCombined}) {
    if (ScenarioKindName(k) == name) return k;
  }
  return absl::InvalidArgumentError(
      absl::StrCat("unknown scenario kind '", std::string(name), "'"));
}

int ScenarioConfig::PoolMembers() const {
  return static_cast<int>(std::llround(coverage_fraction * n_members));
}

absl::Status ScenarioConfig::Validate() const {
  if (d < 1 || num_classes < 2) {
    return absl::InvalidArgumentError("need d >= 1 and num_classes >= 2");
  }
  if (image_shaped && nn::GridWidth(d) == 0) {
    return absl::InvalidArgumentError("image-shaped data needs a square d");
  }
  if (!(class_separation >= 0) || !(stddev > 0)) {
    return absl::InvalidArgumentError("bad separation or stddev");
  }
  if (n_members < 1 || n_in_dist_nonmembers < 0 || n_ood < 0) {
    return absl::InvalidArgumentError("infeasible sample counts");
  }
  if (!(coverage_fraction > 0 && coverage_fraction <= 1)) {
    return absl::InvalidArgumentError("coverage_fraction must lie in (0, 1]");
  }
  if (!(ood_shift.scale > 0)) {
    return absl::InvalidArgumentError("ood scale must be positive");
  }
  const bool full_coverage = coverage_fraction == 1.0;
  switch (kind) {
    case ScenarioKind::kStandard:
      if (n_ood != 0 || n_members != n_in_dist_nonmembers || !full_coverage) {
        return absl::InvalidArgumentError(
            "standard scenario needs n_ood = 0, a 1:1 member ratio and full "
            "coverage");
      }
      break;
    case ScenarioKind::kDifferentDistribution:
      if (n_ood == 0 || !full_coverage) {
        return absl::InvalidArgumentError(
            "different_distribution needs n_ood > 0 and full coverage");
      }
      break;
    case ScenarioKind::kUnknownRatio:
      if (n_ood != 0 || !full_coverage) {
        return absl::InvalidArgumentError(
            "unknown_ratio needs n_ood = 0 and full coverage");
      }
      break;
    case ScenarioKind::kPartialCoverage:
      if (n_ood != 0) {
        return absl::InvalidArgumentError("partial_coverage needs n_ood = 0");
      }
      break;
    case ScenarioKind::kCombined:
      if (n_ood == 0) {
        return absl::InvalidArgumentError("combined scenario needs n_ood > 0");
      }
      break;
  }
  if (PoolMembers() < 1) {
    return absl::InvalidArgumentError("coverage leaves no member in the pool");
  }
  if (PoolMembers() + n_in_dist_nonmembers + n_ood < 2 ||
      n_in_dist_nonmembers + n_ood < 1) {
    return absl::InvalidArgumentError("pool needs at least one non-member");
  }
  return absl::OkStatus();
}

absl::StatusOr<Scenario> BuildScenario(const ScenarioConfig& cfg) {
  if (absl::Status s = cfg.Validate(); !s.ok()) return s;
  Scenario scenario;
  absl::StatusOr<GaussianMixture> mixture =
      MakeGaussianMixture(cfg.d, cfg.num_classes, cfg.class_separation,
                          DeriveSeed(cfg.seed, "mixture"));
  if (!mixture.ok()) return mixture.status();
  mixture->stddev = cfg.stddev;
  scenario.mixture = *mixture;

  const int n_in = cfg.n_members + cfg.n_in_dist_nonmembers;
  std::vector<int> labels(n_in);
  for (int i = 0; i < n_in; ++i) labels[i] = i % cfg.num_classes;
  std::mt19937_64 split_rng(DeriveSeed(cfg.seed, "split"));
  std::shuffle(labels.begin(), labels.end(), split_rng);
  std::vector<LabeledSample> in_dist =
      SampleMixture(*mixture, labels, DeriveSeed(cfg.seed, "in_dist"));
  std::vector<LabeledSample> ood = GenOod(*mixture, cfg.n_ood, cfg.ood_shift,
                                          DeriveSeed(cfg.seed, "ood"));

  // Unique ids as a seeded permutation over every generated sample.
  const int total = n_in + cfg.n_ood;
  std::vector<uint64_t> ids(total);
  std::iota(ids.begin(), ids.end(), uint64_t{0});
  std::mt19937_64 id_rng(DeriveSeed(cfg.seed, "ids"));
  std::shuffle(ids.begin(), ids.end(), id_rng);
  for (int i = 0; i < n_in; ++i) in_dist[i].id = ids[i];
  for (int i = 0; i < cfg.n_ood; ++i) ood[i].id = ids[n_in + i];

  std::vector<LabeledSample> pool;
  scenario.train_set = {{}, cfg.d, cfg.num_classes, cfg.image_shaped};
  const int pool_members = cfg.PoolMembers();
  for (int i = 0; i < cfg.n_members; ++i) {
    in_dist[i].origin = Origin::kMember;
    scenario.train_set.samples.push_back(Strip(in_dist[i]));
    if (i < pool_members) pool.push_back(in_dist[i]);
  }
  for (int i = cfg.n_members; i < n_in; ++i) pool.push_back(in_dist[i]);
  pool.insert(pool.end(), ood.begin(), ood.end());

  std::mt19937_64 pool_rng(DeriveSeed(cfg.seed, "pool"));
  std::shuffle(pool.begin(), pool.end(), pool_rng);
  scenario.pool = {{}, cfg.d, cfg.num_classes, cfg.image_shaped};
  for (const LabeledSample& s : pool) {
    scenario.pool.samples.push_back(Strip(s));
    scenario.truth.emplace_back(s.id, s.origin);
  }
  return scenario;
}

std::vector<LabeledSample> HeldOut(const GaussianMixture& mixture, int n,
                                   uint64_t seed) {
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % mixture.num_classes();
  return SampleMixture(mixture, labels, seed);
}

absl::Status WriteDataset(const std::string& path, const DatasetFile& file) {
  const Dataset& ds = file.dataset;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path));
  out << "kktmia-dataset 1\n";
  out << "d " << ds.d << "\n";
  out << "num_classes " << ds.num_classes << "\n";
  out << "count " << ds.samples.size() << "\n";
  out << "seed " << file.seed << "\n";
  out << "image_shaped " << (ds.image_shaped ? 1 : 0) << "\n";
  for (const auto& [key, value] : file.meta) {
    out << "meta " << key << " " << value << "\n";
  }
  out << "end\n";
  for (const Sample& s : ds.samples) {
    if (s.x.size() != ds.d) {
      return absl::InvalidArgumentError("sample dimension mismatch");
    }
    io::WriteU64(out, s.id);
    io::WriteU64(out, static_cast<uint64_t>(s.y));
    for (int i = 0; i < ds.d; ++i) io::WriteF64(out, s.x(i));
  }
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<DatasetFile> ReadDataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::string line;
  if (!std::getline(in, line) || line != "kktmia-dataset 1") {
    return absl::DataLossError(absl::StrCat(path, ": not a dataset file"));
  }
  DatasetFile file;
  Dataset& ds = file.dataset;
  int64_t count = -1;
  int image = 0;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    bool ok = true;
    if (key == "d") {
      ok = static_cast<bool>(fields >> ds.d);
    } else if (key == "num_classes") {
      ok = static_cast<bool>(fields >> ds.num_classes);
    } else if (key == "count") {
      ok = static_cast<bool>(fields >> count);
    } else if (key == "seed") {
      ok = static_cast<bool>(fields >> file.seed);
    } else if (key == "image_shaped") {
      ok = static_cast<bool>(fields >> image);
    } else if (key == "meta") {
      std::string k, v;
      fields >> k;
      std::getline(fields >> std::ws, v);
      file.meta.emplace_back(k, v);
    } else {
      ok = false;
    }
    if (!ok) {
      return absl::DataLossError(
          absl::StrCat(path, ": bad header line '", line, "'"));
    }
  }
  if (!ended || ds.d < 1 || ds.num_classes < 2 || count < 0) {
    return absl::DataLossError(absl::StrCat(path, ": incomplete header"));
  }
  ds.image_shaped = image != 0;
  ds.samples.reserve(count);
  for (int64_t r = 0; r < count; ++r) {
    Sample s;
    uint64_t label;
    if (!io::ReadU64(in, &s.id) || !io::ReadU64(in, &label)) {
      return absl::DataLossError(absl::StrCat(path, ": truncated rows"));
    }
    s.y = static_cast<int>(label);
    if (s.y < 0 || s.y >= ds.num_classes) {
      return absl::DataLossError(absl::StrCat(path, ": label out of range"));
    }
    s.x.resize(ds.d);
    for (int i = 0; i < ds.d; ++i) {
      if (!io::ReadF64(in, &s.x(i))) {
        return absl::DataLossError(absl::StrCat(path, ": truncated rows"));
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return file;
}

absl::Status WriteMembership(const std::string& path,
                             const MembershipTruth& truth) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path));
  out << "kktmia-membership 1\n";
  out << "sample_id,origin\n";
  for (const auto& [id, origin] : truth) {
    out << id << "," << OriginName(origin) << "\n";
  }
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<MembershipTruth> ReadMembership(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::string line;
  if (!std::getline(in, line) || line != "kktmia-membership 1" ||
      !std::getline(in, line)) {
    return absl::DataLossError(absl::StrCat(path, ": not a membership file"));
  }
  MembershipTruth truth;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> parts = absl::StrSplit(line, ',');
    uint64_t id;
    if (parts.size() != 2 || !absl::SimpleAtoi(parts[0], &id)) {
      return absl::DataLossError(absl::StrCat(path, ": bad row '", line, "'"));
    }
    absl::StatusOr<Origin> origin = ParseOrigin(parts[1]);
    if (!origin.ok()) return origin.status();
    truth.emplace_back(id, *origin);
  }
  return truth;
}

}  // namespace kktmia::data
