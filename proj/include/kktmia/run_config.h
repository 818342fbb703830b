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

#ifndef KKTMIA_RUN_CONFIG_H_
#define KKTMIA_RUN_CONFIG_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "kktmia/attack.h"
#include "kktmia/data_lab.h"
#include "kktmia/nn_engine.h"

namespace kktmia {

// Flat `section.key = value` experiment configuration. Every key has a
// default, unknown keys are rejected and values are type-checked on entry.
// Blank lines and lines starting with '#' are ignored.
//
// Only settings that influence results live here. Paths and thread counts are
// command-line flags, so the echoed config identifies an artifact's content.
class RunConfig {
 public:
  RunConfig();

  static absl::StatusOr<RunConfig> FromText(std::string_view text);
  static absl::StatusOr<RunConfig> FromFile(const std::string& path);

  absl::Status Set(std::string_view key, std::string_view value);
  // Applies one "key=value" override.
  absl::Status SetAssignment(std::string_view assignment);

  const std::string& Get(std::string_view key) const;
  uint64_t master_seed() const;

  // Canonical "key = value" lines in a fixed key order.
  std::string ResolvedText() const;
  // The same pairs with keys prefixed by "config.", for artifact headers.
  std::vector<std::pair<std::string, std::string>> Echo() const;

  // Typed views. Sub-seeds come from the master seed.
  absl::StatusOr<data::ScenarioConfig> Scenario() const;
  int TestSetSize() const;
  uint64_t TestSetSeed() const;
  absl::StatusOr<nn::ArchSpec> Arch() const;
  absl::StatusOr<nn::TrainConfig> Train() const;
  absl::StatusOr<attack::AttackConfig> Attack() const;
  absl::StatusOr<std::vector<double>> FprTargets() const;

 private:
  std::vector<std::pair<std::string, std::string>> values_;
};

}  // namespace kktmia

#endif  // KKTMIA_RUN_CONFIG_H_
