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

#ifndef KKTMIA_CHECKPOINT_H_
#define KKTMIA_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "kktmia/nn_engine.h"

namespace kktmia::nn {

// On-disk model. The file is a text header
//
//   kktmia-checkpoint 1
//   input_dim <d>
//   hidden_widths <w1,w2,...>     (empty list written as "-")
//   num_classes <C>
//   seed <u64>
//   num_params <p>
//   layer <index> <rows> <cols> <offset>     (one per weight matrix)
//   meta <key> <value>                       (zero or more, free-form echo)
//   end
//
// followed by p little-endian float64 values.
struct Checkpoint {
  ArchSpec arch;
  ParamVector theta;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> meta;
};

absl::Status WriteCheckpoint(const std::string& path, const Checkpoint& ckpt);
absl::StatusOr<Checkpoint> ReadCheckpoint(const std::string& path);

}  // namespace kktmia::nn

#endif  // KKTMIA_CHECKPOINT_H_
