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

// Command-line front end: scenario, train, attack, eval and ablate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "json.hpp"
#include "kktmia/attack.h"
#include "kktmia/baselines.h"
#include "kktmia/checkpoint.h"
#include "kktmia/data_lab.h"
#include "kktmia/evaluator.h"
#include "kktmia/run_config.h"

namespace kktmia {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int ExitCodeFor(const absl::Status& status) {
  switch (status.code()) {
    case absl::StatusCode::kOk:
      return kExitOk;
    case absl::StatusCode::kInvalidArgument:
    case absl::StatusCode::kAlreadyExists:
    case absl::StatusCode::kOutOfRange:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
};

void AddConfigFlags(CLI::App* cmd, ConfigFlags* flags) {
  cmd->add_option("--config", flags->config_path,
                  "key = value config file (defaults apply to missing keys)");
  cmd->add_option("--set", flags->overrides,
                  "override one key, e.g. --set train.epochs=500");
}

absl::StatusOr<RunConfig> LoadConfig(const ConfigFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) {
    absl::StatusOr<RunConfig> loaded = RunConfig::FromFile(flags.config_path);
    if (!loaded.ok()) {
      // An unreadable config is a configuration error, not a runtime one.
      return absl::InvalidArgumentError(loaded.status().message());
    }
    cfg = *std::move(loaded);
  }
  for (const std::string& o : flags.overrides) {
    if (absl::Status s = cfg.SetAssignment(o); !s.ok()) return s;
  }
  return cfg;
}

absl::Status CheckWritable(const std::vector<std::string>& paths, bool force) {
  if (force) return absl::OkStatus();
  for (const std::string& p : paths) {
    if (fs::exists(p)) {
      return absl::AlreadyExistsError(
          absl::StrCat(p, " exists; pass --force to overwrite"));
    }
  }
  return absl::OkStatus();
}

absl::Status WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) return absl::InternalError(absl::StrCat("cannot write ", path));
  return absl::OkStatus();
}

Json EchoJson(const std::vector<std::pair<std::string, std::string>>& echo) {
  Json j = Json::object();
  for (const auto& [k, v] : echo) j[k] = v;
  return j;
}

// ---------------------------------------------------------------- scenario

struct ScenarioFlags {
  ConfigFlags config;
  std::string out_dir;
  bool force = false;
};

data::Dataset ToDataset(const std::vector<data::LabeledSample>& samples,
                        const data::Dataset& like) {
  data::Dataset out;
  out.d = like.d;
  out.num_classes = like.num_classes;
  out.image_shaped = like.image_shaped;
  for (const data::LabeledSample& s : samples) {
    out.samples.push_back({s.id, s.x, s.y});
  }
  return out;
}

absl::Status RunScenario(const ScenarioFlags& flags) {
  absl::StatusOr<RunConfig> cfg = LoadConfig(flags.config);
  if (!cfg.ok()) return cfg.status();
  absl::StatusOr<data::ScenarioConfig> sc = cfg->Scenario();
  if (!sc.ok()) return sc.status();
  if (cfg->TestSetSize() < 0) {
    return absl::InvalidArgumentError("scenario.n_test must be >= 0");
  }

  const fs::path dir(flags.out_dir);
  const std::string train_path = (dir / "train.bin").string();
  const std::string pool_path = (dir / "pool.bin").string();
  const std::string test_path = (dir / "test.bin").string();
  const std::string truth_path = (dir / "membership.csv").string();
  const std::string config_path = (dir / "config.txt").string();
  if (absl::Status s = CheckWritable(
          {train_path, pool_path, test_path, truth_path, config_path},
          flags.force);
      !s.ok()) {
    return s;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) return absl::InternalError(absl::StrCat("cannot create ", dir.string()));

  absl::StatusOr<data::Scenario> scenario = data::BuildScenario(*sc);
  if (!scenario.ok()) return scenario.status();
  const auto echo = cfg->Echo();
  auto write = [&](const std::string& path, const data::Dataset& ds,
                   const std::string& role) {
    data::DatasetFile file{ds, sc->seed, echo};
    file.meta.insert(file.meta.begin(), {"role", role});
    return data::WriteDataset(path, file);
  };
  const data::Dataset test = ToDataset(
      data::HeldOut(scenario->mixture, cfg->TestSetSize(), cfg->TestSetSeed()),
      scenario->train_set);
  for (absl::Status s :
       {write(train_path, scenario->train_set, "train"),
        write(pool_path, scenario->pool, "pool"),
        write(test_path, test, "test"),
        data::WriteMembership(truth_path, scenario->truth),
        WriteText(config_path, cfg->ResolvedText())}) {
    if (!s.ok()) return s;
  }
  int members = 0;
  for (const auto& [id, origin] : scenario->truth) members += data::IsMember(origin);
  std::cout << absl::StrFormat(
      "scenario %s: train=%d pool=%d (members %d) test=%d -> %s\n",
      cfg->Get("scenario.kind"), scenario->train_set.samples.size(),
      scenario->pool.samples.size(), members, test.samples.size(),
      dir.string());
  return absl::OkStatus();
}

// ------------------------------------------------------------------- train

struct TrainFlags {
  ConfigFlags config;
  std::string train_path;
  std::string test_path;
  std::string out;
  bool force = false;
};

absl::Status RunTrain(const TrainFlags& flags) {
  absl::StatusOr<RunConfig> cfg = LoadConfig(flags.config);
  if (!cfg.ok()) return cfg.status();
  absl::StatusOr<nn::ArchSpec> arch = cfg->Arch();
  if (!arch.ok()) return arch.status();
  absl::StatusOr<nn::TrainConfig> tc = cfg->Train();
  if (!tc.ok()) return tc.status();
  if (absl::Status s = CheckWritable({flags.out}, flags.force); !s.ok()) return s;

  absl::StatusOr<data::DatasetFile> train = data::ReadDataset(flags.train_path);
  if (!train.ok()) return train.status();
  if (train->dataset.d != arch->input_dim ||
      train->dataset.num_classes != arch->num_classes) {
    return absl::InvalidArgumentError(
        "training data shape does not match scenario.d / scenario.num_classes");
  }
  const std::vector<nn::Example> examples = data::ToExamples(train->dataset);
  absl::StatusOr<nn::TrainResult> result =
      nn::Train(*arch, examples, *tc, train->dataset.image_shaped);
  if (!result.ok()) return result.status();

  nn::Checkpoint ckpt{*arch, result->theta, tc->seed, cfg->Echo()};
  ckpt.meta.emplace_back("epochs_run", absl::StrCat(result->epochs_run));
  ckpt.meta.emplace_back("final_loss",
                         absl::StrFormat("%.17g", result->final_loss));
  if (absl::Status s = nn::WriteCheckpoint(flags.out, ckpt); !s.ok()) return s;

  const double train_acc = nn::Accuracy(result->theta, examples);
  std::string test_part;
  if (!flags.test_path.empty()) {
    absl::StatusOr<data::DatasetFile> test = data::ReadDataset(flags.test_path);
    if (!test.ok()) return test.status();
    const std::vector<nn::Example> test_examples =
        data::ToExamples(test->dataset);
    test_part = absl::StrFormat(" test_accuracy=%.4f",
                                nn::Accuracy(result->theta, test_examples));
  }
  std::cout << absl::StrFormat(
      "epochs=%d final_loss=%.3e grad_norm=%.3e train_accuracy=%.4f%s\n",
      result->epochs_run, result->final_loss, result->final_grad_norm,
      train_acc, test_part);
  return absl::OkStatus();
}

// ------------------------------------------------------------------ attack

struct AttackFlags {
  ConfigFlags config;
  std::string pool_path;
  std::string checkpoint_path;
  std::string out;
  std::string baseline = "impmia";
  std::string blocks_cache;
  std::string precision;
  std::string trace_dir;
  int threads = 1;
  bool force = false;
};

std::string SidecarPath(const std::string& csv_path) {
  return fs::path(csv_path).replace_extension(".json").string();
}

absl::Status LoadModelAndPool(const std::string& checkpoint_path,
                              const std::string& pool_path,
                              nn::Checkpoint* ckpt, data::CandidatePool* pool) {
  absl::StatusOr<nn::Checkpoint> c = nn::ReadCheckpoint(checkpoint_path);
  if (!c.ok()) return c.status();
  absl::StatusOr<data::DatasetFile> p = data::ReadDataset(pool_path);
  if (!p.ok()) return p.status();
  if (p->dataset.d != c->arch.input_dim ||
      p->dataset.num_classes != c->arch.num_classes) {
    return absl::InvalidArgumentError("pool shape does not match checkpoint");
  }
  *ckpt = *std::move(c);
  *pool = std::move(p->dataset);
  return absl::OkStatus();
}

absl::Status RunAttack(const AttackFlags& flags) {
  absl::StatusOr<RunConfig> cfg = LoadConfig(flags.config);
  if (!cfg.ok()) return cfg.status();
  if (!flags.precision.empty()) {
    if (absl::Status s = cfg->Set("attack.precision", flags.precision);
        !s.ok()) {
      return s;
    }
  }
  absl::StatusOr<attack::AttackConfig> ac = cfg->Attack();
  if (!ac.ok()) return ac.status();
  if (flags.threads < 1) {
    return absl::InvalidArgumentError("--threads must be >= 1");
  }
  ac->threads = flags.threads;
  ac->blocks_cache_dir = flags.blocks_cache;
  ac->trace_dir = flags.trace_dir;
  const std::string json_path = SidecarPath(flags.out);
  if (absl::Status s = CheckWritable({flags.out, json_path}, flags.force);
      !s.ok()) {
    return s;
  }
  for (const std::string& dir : {flags.blocks_cache, flags.trace_dir}) {
    std::error_code ec;
    if (!dir.empty()) fs::create_directories(dir, ec);
    if (ec) return absl::InternalError(absl::StrCat("cannot create ", dir));
  }

  nn::Checkpoint ckpt;
  data::CandidatePool pool;
  if (absl::Status s =
          LoadModelAndPool(flags.checkpoint_path, flags.pool_path, &ckpt, &pool);
      !s.ok()) {
    return s;
  }

  absl::StatusOr<score::ScoreReport> report;
  std::vector<std::pair<std::string, std::string>> extra;
  if (flags.baseline == "impmia") {
    absl::StatusOr<attack::AttackResult> result =
        attack::RunImpMia(pool, ckpt.arch, ckpt.theta, *ac);
    if (!result.ok()) return result.status();
    extra = {
        {"num_blocks", absl::StrCat(result->layout.blocks.size())},
        {"retained_candidates", absl::StrCat(result->retained_candidates)},
        {"dropped_columns", absl::StrCat(result->dropped_columns)},
        {"failed_blocks", absl::StrCat(result->lambdas.failed_blocks.size())},
    };
    for (const auto& [block, reason] : result->lambdas.failed_blocks) {
      extra.emplace_back(absl::StrCat("failed_block.", block), reason);
    }
    report = std::move(result->report);
  } else if (flags.baseline == "gradnorm-loss") {
    report = baselines::GradNormScore(pool, ckpt.arch, ckpt.theta,
                                      baselines::GradKind::kLoss);
  } else if (flags.baseline == "gradnorm-margin") {
    report = baselines::GradNormScore(pool, ckpt.arch, ckpt.theta,
                                      baselines::GradKind::kMargin);
  } else if (flags.baseline == "loss-threshold") {
    report = baselines::LossThresholdScore(pool, ckpt.arch, ckpt.theta);
  } else {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown --baseline '", flags.baseline, "'"));
  }
  if (!report.ok()) return report.status();

  report->metadata = cfg->Echo();
  report->metadata.emplace_back("checkpoint_seed", absl::StrCat(ckpt.seed));
  report->metadata.insert(report->metadata.end(), extra.begin(), extra.end());
  if (absl::Status s = score::WriteScoreReport(flags.out, json_path, *report);
      !s.ok()) {
    return s;
  }
  std::cout << absl::StrFormat("%s: scored %d candidates -> %s\n",
                               report->attack_name, report->rows.size(),
                               flags.out);
  return absl::OkStatus();
}

// -------------------------------------------------------------------- eval

struct EvalFlags {
  ConfigFlags config;
  std::vector<std::string> reports;
  std::vector<std::string> truths;
  std::string out;
  std::string roc;
  bool force = false;
};

std::string IndexedPath(const std::string& path, size_t i, size_t n) {
  if (n == 1) return path;
  fs::path p(path);
  const std::string stem = p.stem().string();
  return p.replace_filename(absl::StrCat(stem, "_", i, p.extension().string()))
      .string();
}

absl::Status RunEval(const EvalFlags& flags) {
  absl::StatusOr<RunConfig> cfg = LoadConfig(flags.config);
  if (!cfg.ok()) return cfg.status();
  absl::StatusOr<std::vector<double>> targets = cfg->FprTargets();
  if (!targets.ok()) return targets.status();
  if (flags.truths.size() != 1 && flags.truths.size() != flags.reports.size()) {
    return absl::InvalidArgumentError(
        "pass one --truth, or one per --report");
  }
  std::vector<std::string> outputs = {flags.out};
  if (!flags.roc.empty()) {
    for (size_t i = 0; i < flags.reports.size(); ++i) {
      outputs.push_back(IndexedPath(flags.roc, i, flags.reports.size()));
    }
  }
  if (absl::Status s = CheckWritable(outputs, flags.force); !s.ok()) return s;

  std::vector<eval::MetricsReport> metrics;
  Json per_report = Json::array();
  for (size_t i = 0; i < flags.reports.size(); ++i) {
    const std::string& truth_path =
        flags.truths.size() == 1 ? flags.truths[0] : flags.truths[i];
    if (!fs::exists(truth_path)) {
      return absl::NotFoundError(absl::StrCat(
          "membership sidecar ", truth_path,
          " is missing; evaluation needs ground truth"));
    }
    absl::StatusOr<data::MembershipTruth> truth =
        data::ReadMembership(truth_path);
    if (!truth.ok()) return truth.status();
    absl::StatusOr<score::ScoreReport> report = score::ReadScoreReport(
        flags.reports[i], SidecarPath(flags.reports[i]));
    if (!report.ok()) return report.status();
    std::vector<double> scores;
    std::vector<bool> is_member;
    if (absl::Status s = eval::JoinTruth(*report, *truth, &scores, &is_member);
        !s.ok()) {
      return s;
    }
    absl::StatusOr<eval::MetricsReport> m =
        eval::Evaluate(scores, is_member, *targets);
    if (!m.ok()) return m.status();
    if (!flags.roc.empty()) {
      if (absl::Status s = eval::WriteRocCsv(
              IndexedPath(flags.roc, i, flags.reports.size()), *m);
          !s.ok()) {
        return s;
      }
    }
    Json entry = Json::object();
    entry["index"] = i;
    entry["attack_name"] = report->attack_name;
    entry["metrics"] = eval::ToJson(*m);
    entry["report_metadata"] = EchoJson(report->metadata);
    per_report.push_back(std::move(entry));
    std::cout << absl::StrFormat("[%d] %s auc=%.4f", i, report->attack_name,
                                 m->auc);
    for (const eval::TprPoint& t : m->tpr_at) {
      std::cout << absl::StrFormat(" tpr@%g=%.4f", t.fpr_target, t.tpr);
    }
    std::cout << "\n";
    metrics.push_back(*std::move(m));
  }
  absl::StatusOr<eval::AggregateReport> agg = eval::AggregateSeeds(metrics);
  if (!agg.ok()) return agg.status();

  Json out = Json::object();
  out["config"] = EchoJson(cfg->Echo());
  out["reports"] = std::move(per_report);
  out["aggregate"] = eval::ToJson(*agg);
  if (absl::Status s = WriteText(flags.out, out.dump(2) + "\n"); !s.ok()) {
    return s;
  }
  if (metrics.size() > 1) {
    for (const eval::MetricSummary& ms : agg->metrics) {
      std::cout << absl::StrFormat("%s: %.4f +/- %.4f\n", ms.name, ms.mean,
                                   ms.standard_error);
    }
  }
  return absl::OkStatus();
}

// ------------------------------------------------------------------ ablate

struct AblateFlags {
  ConfigFlags config;
  std::vector<std::string> pools;
  std::vector<std::string> checkpoints;
  std::vector<std::string> truths;
  std::string out;
  int threads = 1;
  bool force = false;
};

absl::Status RunAblate(const AblateFlags& flags) {
  absl::StatusOr<RunConfig> cfg = LoadConfig(flags.config);
  if (!cfg.ok()) return cfg.status();
  absl::StatusOr<attack::AttackConfig> ac = cfg->Attack();
  if (!ac.ok()) return ac.status();
  absl::StatusOr<std::vector<double>> targets = cfg->FprTargets();
  if (!targets.ok()) return targets.status();
  if (flags.threads < 1) {
    return absl::InvalidArgumentError("--threads must be >= 1");
  }
  ac->threads = flags.threads;
  if (flags.pools.size() != flags.checkpoints.size() ||
      flags.pools.size() != flags.truths.size()) {
    return absl::InvalidArgumentError(
        "--pool, --checkpoint and --truth must be given equally often");
  }
  if (absl::Status s = CheckWritable({flags.out}, flags.force); !s.ok()) {
    return s;
  }

  const auto stages = score::AblationStages(ac->fusion);
  std::vector<std::vector<eval::MetricsReport>> per_stage(stages.size());
  for (size_t run = 0; run < flags.pools.size(); ++run) {
    nn::Checkpoint ckpt;
    data::CandidatePool pool;
    if (absl::Status s = LoadModelAndPool(flags.checkpoints[run],
                                          flags.pools[run], &ckpt, &pool);
        !s.ok()) {
      return s;
    }
    absl::StatusOr<data::MembershipTruth> truth =
        data::ReadMembership(flags.truths[run]);
    if (!truth.ok()) return truth.status();
    absl::StatusOr<attack::AttackResult> result =
        attack::RunImpMia(pool, ckpt.arch, ckpt.theta, *ac);
    if (!result.ok()) return result.status();
    for (size_t k = 0; k < stages.size(); ++k) {
      const score::ScoreReport report =
          attack::Rescore(pool, ckpt.theta, result->lambdas, stages[k].second);
      std::vector<double> scores;
      std::vector<bool> is_member;
      if (absl::Status s = eval::JoinTruth(report, *truth, &scores, &is_member);
          !s.ok()) {
        return s;
      }
      absl::StatusOr<eval::MetricsReport> m =
          eval::Evaluate(scores, is_member, *targets);
      if (!m.ok()) return m.status();
      per_stage[k].push_back(*std::move(m));
    }
  }

  Json out = Json::object();
  out["config"] = EchoJson(cfg->Echo());
  out["num_runs"] = flags.pools.size();
  Json rows = Json::array();
  for (size_t k = 0; k < stages.size(); ++k) {
    absl::StatusOr<eval::AggregateReport> agg =
        eval::AggregateSeeds(per_stage[k]);
    if (!agg.ok()) return agg.status();
    Json row = Json::object();
    row["stage"] = stages[k].first;
    row["aggregate"] = eval::ToJson(*agg);
    rows.push_back(std::move(row));
    std::cout << absl::StrFormat("%-10s", stages[k].first);
    for (const eval::MetricSummary& ms : agg->metrics) {
      std::cout << absl::StrFormat("  %s=%.4f+/-%.4f", ms.name, ms.mean,
                                   ms.standard_error);
    }
    std::cout << "\n";
  }
  out["stages"] = std::move(rows);
  return WriteText(flags.out, out.dump(2) + "\n");
}

}  // namespace
}  // namespace kktmia

int main(int argc, char** argv) {
  using namespace kktmia;  // NOLINT
  CLI::App app{"kktmia: coefficient-based membership inference toolkit"};
  app.require_subcommand(1);

  ScenarioFlags scenario_flags;
  CLI::App* scenario = app.add_subcommand(
      "scenario", "generate train set, candidate pool and membership sidecar");
  AddConfigFlags(scenario, &scenario_flags.config);
  scenario->add_option("--out-dir", scenario_flags.out_dir)->required();
  scenario->add_flag("--force", scenario_flags.force);

  TrainFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "train the target model");
  AddConfigFlags(train, &train_flags.config);
  train->add_option("--train", train_flags.train_path)->required();
  train->add_option("--test", train_flags.test_path,
                    "held-out set for a test-accuracy report");
  train->add_option("--out", train_flags.out, "checkpoint path")->required();
  train->add_flag("--force", train_flags.force);

  AttackFlags attack_flags;
  CLI::App* attack = app.add_subcommand(
      "attack", "score a candidate pool (never reads membership tags)");
  AddConfigFlags(attack, &attack_flags.config);
  attack->add_option("--pool", attack_flags.pool_path)->required();
  attack->add_option("--checkpoint", attack_flags.checkpoint_path)->required();
  attack->add_option("--out", attack_flags.out,
                     "score CSV; metadata goes next to it as .json")
      ->required();
  attack->add_option("--baseline", attack_flags.baseline)
      ->check(CLI::IsMember(
          {"impmia", "gradnorm-loss", "gradnorm-margin", "loss-threshold"}));
  attack->add_option("--blocks-cache", attack_flags.blocks_cache,
                     "directory for reusable gradient blocks");
  attack->add_option("--precision", attack_flags.precision)
      ->check(CLI::IsMember({"f64", "f32"}));
  attack->add_option("--trace-dir", attack_flags.trace_dir,
                     "write per-block solver traces here");
  attack->add_option("--threads", attack_flags.threads);
  attack->add_flag("--force", attack_flags.force);

  EvalFlags eval_flags;
  CLI::App* evaluate =
      app.add_subcommand("eval", "metrics for one or more score reports");
  AddConfigFlags(evaluate, &eval_flags.config);
  evaluate->add_option("--report", eval_flags.reports)->required();
  evaluate->add_option("--truth", eval_flags.truths,
                       "membership sidecar (one, or one per report)")
      ->required();
  evaluate->add_option("--out", eval_flags.out, "metrics JSON")->required();
  evaluate->add_option("--roc", eval_flags.roc, "ROC CSV path");
  evaluate->add_flag("--force", eval_flags.force);

  AblateFlags ablate_flags;
  CLI::App* ablate = app.add_subcommand(
      "ablate", "evaluate each fusion/post-processing stage");
  AddConfigFlags(ablate, &ablate_flags.config);
  ablate->add_option("--pool", ablate_flags.pools)->required();
  ablate->add_option("--checkpoint", ablate_flags.checkpoints)->required();
  ablate->add_option("--truth", ablate_flags.truths)->required();
  ablate->add_option("--out", ablate_flags.out, "ablation JSON")->required();
  ablate->add_option("--threads", ablate_flags.threads);
  ablate->add_flag("--force", ablate_flags.force);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  absl::Status status;
  if (*scenario) {
    status = RunScenario(scenario_flags);
  } else if (*train) {
    status = RunTrain(train_flags);
  } else if (*attack) {
    status = RunAttack(attack_flags);
  } else if (*evaluate) {
    status = RunEval(eval_flags);
  } else {
    status = RunAblate(ablate_flags);
  }
  if (!status.ok()) {
    std::cerr << "error: " << status.ToString() << "\n";
  }
  return ExitCodeFor(status);
}
