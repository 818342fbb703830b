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

#include "kktmia/checkpoint.h"

#include <fstream>
#include <sstream>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "kktmia/binary_io.h"

namespace kktmia::nn {

absl::Status WriteCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  if (!ckpt.theta.Matches(ckpt.arch)) {
    return absl::InvalidArgumentError("checkpoint theta does not match arch");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path));
  out << "kktmia-checkpoint 1\n";
  out << "input_dim " << ckpt.arch.input_dim << "\n";
  out << "hidden_widths "
      << (ckpt.arch.hidden_widths.empty()
              ? std::string("-")
              : absl::StrJoin(ckpt.arch.hidden_widths, ","))
      << "\n";
  out << "num_classes " << ckpt.arch.num_classes << "\n";
  out << "seed " << ckpt.seed << "\n";
  out << "num_params " << ckpt.theta.size() << "\n";
  for (const LayerLayout& e : ckpt.theta.layout()) {
    out << "layer " << e.layer_index << " " << e.rows << " " << e.cols << " "
        << e.offset << "\n";
  }
  for (const auto& [key, value] : ckpt.meta) {
    out << "meta " << key << " " << value << "\n";
  }
  out << "end\n";
  for (int64_t i = 0; i < ckpt.theta.size(); ++i) {
    io::WriteF64(out, ckpt.theta.values()(i));
  }
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<Checkpoint> ReadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::string line;
  if (!std::getline(in, line) || line != "kktmia-checkpoint 1") {
    return absl::DataLossError(absl::StrCat(path, ": not a checkpoint"));
  }
  Checkpoint ckpt;
  int64_t num_params = -1;
  std::vector<LayerLayout> layout;
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
    if (key == "input_dim") {
      ok = static_cast<bool>(fields >> ckpt.arch.input_dim);
    } else if (key == "hidden_widths") {
      std::string list;
      fields >> list;
      if (list != "-") {
        for (absl::string_view w : absl::StrSplit(list, ',')) {
          int width;
          if (!absl::SimpleAtoi(w, &width)) ok = false;
          ckpt.arch.hidden_widths.push_back(width);
        }
      }
    } else if (key == "num_classes") {
      ok = static_cast<bool>(fields >> ckpt.arch.num_classes);
    } else if (key == "seed") {
      ok = static_cast<bool>(fields >> ckpt.seed);
    } else if (key == "num_params") {
      ok = static_cast<bool>(fields >> num_params);
    } else if (key == "layer") {
      LayerLayout e;
      ok = static_cast<bool>(fields >> e.layer_index >> e.rows >> e.cols >>
                             e.offset);
      layout.push_back(e);
    } else if (key == "meta") {
      std::string k, v;
      fields >> k;
      std::getline(fields >> std::ws, v);
      ckpt.meta.emplace_back(k, v);
    } else {
      ok = false;
    }
    if (!ok) {
      return absl::DataLossError(
          absl::StrCat(path, ": bad header line '", line, "'"));
    }
  }
  if (!ended) return absl::DataLossError(absl::StrCat(path, ": missing end"));
  if (absl::Status s = ckpt.arch.Validate(); !s.ok()) return s;
  if (num_params != ckpt.arch.NumParams()) {
    return absl::DataLossError(absl::StrCat(path, ": parameter count mismatch"));
  }
  const std::vector<LayerLayout> expected = MakeLayout(ckpt.arch);
  if (layout.size() != expected.size()) {
    return absl::DataLossError(absl::StrCat(path, ": layout mismatch"));
  }
  for (size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].rows != expected[i].rows ||
        layout[i].cols != expected[i].cols ||
        layout[i].offset != expected[i].offset) {
      return absl::DataLossError(absl::StrCat(path, ": layout mismatch"));
    }
  }
  Eigen::VectorXd values(num_params);
  for (int64_t i = 0; i < num_params; ++i) {
    if (!io::ReadF64(in, &values(i))) {
      return absl::DataLossError(absl::StrCat(path, ": truncated parameters"));
    }
  }
  ckpt.theta = ParamVector(ckpt.arch, std::move(values));
  return ckpt;
}

}  // namespace kktmia::nn
