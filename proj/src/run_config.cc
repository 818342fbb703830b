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

#include "kktmia/run_config.h"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "kktmia/seeding.h"

namespace kktmia {
namespace {

enum class Kind { kUint, kInt, kDouble, kBool, kScenario, kPrecision, kIntList,
                  kDoubleList };

struct KeySpec {
  const char* key;
  const char* default_value;
  Kind kind;
};

// Defaults describe the desk-scale benchmark.
constexpr KeySpec kKeys[] = {
    {"seed", "0", Kind::kUint},
    {"scenario.kind", "standard", Kind::kScenario},
    {"scenario.d", "64", Kind::kInt},
    {"scenario.num_classes", "4", Kind::kInt},
    {"scenario.class_separation", "1.0", Kind::kDouble},
    {"scenario.stddev", "1.0", Kind::kDouble},
    {"scenario.image_shaped", "true", Kind::kBool},
    {"scenario.n_members", "200", Kind::kInt},
    {"scenario.n_in_dist_nonmembers", "200", Kind::kInt},
    {"scenario.n_ood", "0", Kind::kInt},
    {"scenario.coverage_fraction", "1.0", Kind::kDouble},
    {"scenario.ood_mean_shift", "2.0", Kind::kDouble},
    {"scenario.ood_scale", "1.0", Kind::kDouble},
    {"scenario.n_test", "1000", Kind::kInt},
    {"arch.hidden_widths", "128,128", Kind::kIntList},
    {"train.learning_rate", "0.05", Kind::kDouble},
    {"train.momentum", "0.9", Kind::kDouble},
    {"train.weight_decay", "1e-4", Kind::kDouble},
    {"train.epochs", "2000", Kind::kInt},
    {"train.batch_size", "100", Kind::kInt},
    {"train.flip_augment", "true", Kind::kBool},
    {"train.loss_tol", "1e-3", Kind::kDouble},
    {"train.grad_tol", "0", Kind::kDouble},
    {"attack.block_size_target", "4096", Kind::kInt},
    {"attack.last_k_layers", "0", Kind::kInt},
    {"attack.precision", "f64", Kind::kPrecision},
    {"attack.margin_filter_width", "inf", Kind::kDouble},
    {"solver.alpha", "1.0", Kind::kDouble},
    {"solver.beta", "0.1", Kind::kDouble},
    {"solver.max_iters", "2000", Kind::kInt},
    {"solver.base_learning_rate", "0.01", Kind::kDouble},
    {"solver.weight_decay", "0.01", Kind::kDouble},
    {"solver.clip_norm", "1.0", Kind::kDouble},
    {"solver.early_stop_patience", "50", Kind::kInt},
    {"solver.early_stop_tol", "1e-7", Kind::kDouble},
    {"fusion.trim_fraction", "0.2", Kind::kDouble},
    {"fusion.use_trim", "true", Kind::kBool},
    {"fusion.use_snr", "true", Kind::kBool},
    {"fusion.w_trim", "0.5", Kind::kDouble},
    {"fusion.w_snr", "0.5", Kind::kDouble},
    {"fusion.boost_class", "true", Kind::kBool},
    {"fusion.boost_sample", "true", Kind::kBool},
    {"fusion.distance_scale", "true", Kind::kBool},
    {"fusion.gamma", "0.5", Kind::kDouble},
    {"fusion.delta", "0.5", Kind::kDouble},
    {"fusion.eta", "0.5", Kind::kDouble},
    {"fusion.eps_div", "1e-3", Kind::kDouble},
    {"fusion.top_k", "5", Kind::kInt},
    {"fusion.epsilon_std", "1e-8", Kind::kDouble},
    {"eval.fpr_targets", "0,0.005,0.01,0.05", Kind::kDoubleList},
};

std::string_view Std(absl::string_view s) { return {s.data(), s.size()}; }

const KeySpec* FindKey(std::string_view key) {
  for (const KeySpec& spec : kKeys) {
    if (key == spec.key) return &spec;
  }
  return nullptr;
}

absl::StatusOr<std::vector<double>> ParseDoubles(std::string_view text) {
  std::vector<double> out;
  for (absl::string_view part :
       absl::StrSplit(absl::string_view(text.data(), text.size()), ',')) {
    double v;
    if (!absl::SimpleAtod(absl::StripAsciiWhitespace(part), &v)) {
      return absl::InvalidArgumentError(
          absl::StrCat("not a number: '", part, "'"));
    }
    out.push_back(v);
  }
  return out;
}

absl::StatusOr<std::vector<int>> ParseInts(std::string_view text) {
  std::vector<int> out;
  if (text == "-") return out;
  for (absl::string_view part :
       absl::StrSplit(absl::string_view(text.data(), text.size()), ',')) {
    int v;
    if (!absl::SimpleAtoi(absl::StripAsciiWhitespace(part), &v)) {
      return absl::InvalidArgumentError(
          absl::StrCat("not an integer: '", part, "'"));
    }
    out.push_back(v);
  }
  return out;
}

// Returns the canonical spelling of a valid value.
absl::StatusOr<std::string> Canonicalize(Kind kind, std::string_view value) {
  const absl::string_view v(value.data(), value.size());
  switch (kind) {
    case Kind::kUint: {
      uint64_t x;
      if (!absl::SimpleAtoi(v, &x)) break;
      return absl::StrCat(x);
    }
    case Kind::kInt: {
      int64_t x;
      if (!absl::SimpleAtoi(v, &x)) break;
      return absl::StrCat(x);
    }
    case Kind::kDouble: {
      double x;
      if (!absl::SimpleAtod(v, &x) || std::isnan(x)) break;
      return std::string(v);
    }
    case Kind::kBool: {
      bool x;
      if (!absl::SimpleAtob(v, &x)) break;
      return std::string(x ? "true" : "false");
    }
    case Kind::kScenario:
      if (!data::ParseScenarioKind(value).ok()) break;
      return std::string(v);
    case Kind::kPrecision:
      if (!grad::ParsePrecision(value).ok()) break;
      return std::string(v);
    case Kind::kIntList:
      if (!ParseInts(value).ok()) break;
      return std::string(v);
    case Kind::kDoubleList:
      if (!ParseDoubles(value).ok()) break;
      return std::string(v);
  }
  return absl::InvalidArgumentError(absl::StrCat("bad value '", v, "'"));
}

}  // namespace

RunConfig::RunConfig() {
  for (const KeySpec& spec : kKeys) {
    values_.emplace_back(spec.key, spec.default_value);
  }
}

absl::Status RunConfig::Set(std::string_view key, std::string_view value) {
  const KeySpec* spec = FindKey(key);
  if (spec == nullptr) {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown config key '", std::string(key), "'"));
  }
  absl::StatusOr<std::string> canonical = Canonicalize(spec->kind, value);
  if (!canonical.ok()) {
    return absl::InvalidArgumentError(absl::StrCat(
        std::string(key), ": ", canonical.status().message()));
  }
  for (auto& [k, v] : values_) {
    if (k == key) v = *std::move(canonical);
  }
  return absl::OkStatus();
}

absl::Status RunConfig::SetAssignment(std::string_view assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    return absl::InvalidArgumentError(absl::StrCat(
        "expected key = value, got '", std::string(assignment), "'"));
  }
  const absl::string_view a(assignment.data(), assignment.size());
  return Set(Std(absl::StripAsciiWhitespace(a.substr(0, eq))),
             Std(absl::StripAsciiWhitespace(a.substr(eq + 1))));
}

absl::StatusOr<RunConfig> RunConfig::FromText(std::string_view text) {
  RunConfig cfg;
  int line_no = 0;
  for (absl::string_view line :
       absl::StrSplit(absl::string_view(text.data(), text.size()), '\n')) {
    ++line_no;
    line = absl::StripAsciiWhitespace(line);
    if (line.empty() || line.front() == '#') continue;
    if (absl::Status s = cfg.SetAssignment(Std(line)); !s.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_no, ": ", s.message()));
    }
  }
  return cfg;
}

absl::StatusOr<RunConfig> RunConfig::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return FromText(buf.str());
}

const std::string& RunConfig::Get(std::string_view key) const {
  for (const auto& [k, v] : values_) {
    if (k == key) return v;
  }
  // Keys are compile-time constants of this file.
  std::abort();
}

uint64_t RunConfig::master_seed() const {
  uint64_t seed = 0;
  (void)absl::SimpleAtoi(Get("seed"), &seed);
  return seed;
}

std::string RunConfig::ResolvedText() const {
  std::string out;
  for (const auto& [k, v] : values_) absl::StrAppend(&out, k, " = ", v, "\n");
  return out;
}

std::vector<std::pair<std::string, std::string>> RunConfig::Echo() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : values_) out.emplace_back("config." + k, v);
  return out;
}

namespace {

int AsInt(const std::string& s) {
  int64_t v = 0;
  (void)absl::SimpleAtoi(s, &v);
  return static_cast<int>(v);
}

double AsDouble(const std::string& s) {
  double v = 0;
  (void)absl::SimpleAtod(s, &v);
  return v;
}

bool AsBool(const std::string& s) { return s == "true"; }

}  // namespace

absl::StatusOr<data::ScenarioConfig> RunConfig::Scenario() const {
  data::ScenarioConfig sc;
  absl::StatusOr<data::ScenarioKind> kind =
      data::ParseScenarioKind(Get("scenario.kind"));
  if (!kind.ok()) return kind.status();
  sc.kind = *kind;
  sc.d = AsInt(Get("scenario.d"));
  sc.num_classes = AsInt(Get("scenario.num_classes"));
  sc.class_separation = AsDouble(Get("scenario.class_separation"));
  sc.stddev = AsDouble(Get("scenario.stddev"));
  sc.image_shaped = AsBool(Get("scenario.image_shaped"));
  sc.n_members = AsInt(Get("scenario.n_members"));
  sc.n_in_dist_nonmembers = AsInt(Get("scenario.n_in_dist_nonmembers"));
  sc.n_ood = AsInt(Get("scenario.n_ood"));
  sc.coverage_fraction = AsDouble(Get("scenario.coverage_fraction"));
  sc.ood_shift.mean_shift = AsDouble(Get("scenario.ood_mean_shift"));
  sc.ood_shift.scale = AsDouble(Get("scenario.ood_scale"));
  sc.seed = DeriveSeed(master_seed(), "scenario");
  if (absl::Status s = sc.Validate(); !s.ok()) return s;
  return sc;
}

int RunConfig::TestSetSize() const { return AsInt(Get("scenario.n_test")); }

uint64_t RunConfig::TestSetSeed() const {
  return DeriveSeed(master_seed(), "test");
}

absl::StatusOr<nn::ArchSpec> RunConfig::Arch() const {
  absl::StatusOr<std::vector<int>> widths =
      ParseInts(Get("arch.hidden_widths"));
  if (!widths.ok()) return widths.status();
  nn::ArchSpec arch{AsInt(Get("scenario.d")), *widths,
                    AsInt(Get("scenario.num_classes"))};
  if (absl::Status s = arch.Validate(); !s.ok()) return s;
  return arch;
}

absl::StatusOr<nn::TrainConfig> RunConfig::Train() const {
  nn::TrainConfig tc;
  tc.learning_rate = AsDouble(Get("train.learning_rate"));
  tc.momentum = AsDouble(Get("train.momentum"));
  tc.weight_decay = AsDouble(Get("train.weight_decay"));
  tc.epochs = AsInt(Get("train.epochs"));
  tc.batch_size = AsInt(Get("train.batch_size"));
  tc.flip_augment = AsBool(Get("train.flip_augment"));
  tc.loss_tol = AsDouble(Get("train.loss_tol"));
  tc.grad_tol = AsDouble(Get("train.grad_tol"));
  tc.seed = DeriveSeed(master_seed(), "train");
  if (absl::Status s = tc.Validate(); !s.ok()) return s;
  return tc;
}

absl::StatusOr<attack::AttackConfig> RunConfig::Attack() const {
  attack::AttackConfig ac;
  ac.block_size_target = AsInt(Get("attack.block_size_target"));
  ac.last_k_layers = AsInt(Get("attack.last_k_layers"));
  absl::StatusOr<grad::Precision> precision =
      grad::ParsePrecision(Get("attack.precision"));
  if (!precision.ok()) return precision.status();
  ac.precision = *precision;
  ac.margin_filter_width = AsDouble(Get("attack.margin_filter_width"));
  if (!(ac.margin_filter_width >= 0)) {
    return absl::InvalidArgumentError("margin_filter_width must be >= 0");
  }
  if (ac.block_size_target < 1 || ac.last_k_layers < 0) {
    return absl::InvalidArgumentError("bad block_size_target or last_k_layers");
  }

  solver::SolverConfig& s = ac.solver;
  s.alpha = AsDouble(Get("solver.alpha"));
  s.beta = AsDouble(Get("solver.beta"));
  s.max_iters = AsInt(Get("solver.max_iters"));
  s.base_learning_rate = AsDouble(Get("solver.base_learning_rate"));
  s.weight_decay = AsDouble(Get("solver.weight_decay"));
  s.clip_norm = AsDouble(Get("solver.clip_norm"));
  s.early_stop_patience = AsInt(Get("solver.early_stop_patience"));
  s.early_stop_tol = AsDouble(Get("solver.early_stop_tol"));
  s.seed = DeriveSeed(master_seed(), "solver");
  if (absl::Status st = s.Validate(); !st.ok()) return st;

  score::FusionConfig& f = ac.fusion;
  f.trim_fraction = AsDouble(Get("fusion.trim_fraction"));
  f.use_trim = AsBool(Get("fusion.use_trim"));
  f.use_snr = AsBool(Get("fusion.use_snr"));
  f.w_trim = AsDouble(Get("fusion.w_trim"));
  f.w_snr = AsDouble(Get("fusion.w_snr"));
  f.boost_class = AsBool(Get("fusion.boost_class"));
  f.boost_sample = AsBool(Get("fusion.boost_sample"));
  f.distance_scale = AsBool(Get("fusion.distance_scale"));
  f.gamma = AsDouble(Get("fusion.gamma"));
  f.delta = AsDouble(Get("fusion.delta"));
  f.eta = AsDouble(Get("fusion.eta"));
  f.eps_div = AsDouble(Get("fusion.eps_div"));
  f.top_k = AsInt(Get("fusion.top_k"));
  f.epsilon_std = AsDouble(Get("fusion.epsilon_std"));
  if (absl::Status st = f.Validate(); !st.ok()) return st;
  return ac;
}

absl::StatusOr<std::vector<double>> RunConfig::FprTargets() const {
  absl::StatusOr<std::vector<double>> targets =
      ParseDoubles(Get("eval.fpr_targets"));
  if (!targets.ok()) return targets.status();
  for (double q : *targets) {
    if (!(q >= 0 && q <= 1)) {
      return absl::InvalidArgumentError("fpr targets must lie in [0, 1]");
    }
  }
  return targets;
}

}  // namespace kktmia
