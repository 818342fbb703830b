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

#include "kktmia/attack.h"

#include <atomic>
#include <filesystem>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "absl/strings/str_cat.h"

namespace kktmia::attack {
namespace {

struct BlockOutcome {
  absl::Status status;
  grad::GradientBlock block;
  Eigen::VectorXd raw;
  Eigen::VectorXd z;
};

absl::StatusOr<grad::GradientBlock> LoadOrAssemble(
    const AttackConfig& cfg, const grad::BlockLayout& layout, int b,
    const grad::ViewGradients& gradients, const nn::ParamVector& theta) {
  std::string path;
  if (!cfg.blocks_cache_dir.empty()) {
    path = (std::filesystem::path(cfg.blocks_cache_dir) /
            absl::StrCat("block_", b, ".bin"))
               .string();
    if (std::filesystem::exists(path)) {
      absl::StatusOr<grad::GradientBlock> cached = grad::ReadBlockCache(path);
      if (cached.ok() && cached->block_id == b &&
          cached->precision == cfg.precision &&
          cached->rows() == layout.blocks[b].size()) {
        std::vector<grad::ColumnKey> all = cached->column_index;
        all.insert(all.end(), cached->dropped.begin(), cached->dropped.end());
        std::unordered_set<uint64_t> expected;
        for (const grad::ColumnKey& k : gradients.keys) {
          expected.insert(k.sample_id * 4 + k.view_id);
        }
        bool same = all.size() == gradients.keys.size();
        for (const grad::ColumnKey& k : all) {
          same = same && expected.count(k.sample_id * 4 + k.view_id) > 0;
        }
        if (same) return cached;
      }
    }
  }
  absl::StatusOr<grad::GradientBlock> block =
      grad::AssembleBlock(layout, b, gradients, theta, cfg.precision);
  if (block.ok() && !path.empty()) {
    if (absl::Status s = grad::WriteBlockCache(path, *block); !s.ok()) return s;
  }
  return block;
}

}  // namespace

score::ScoreReport Rescore(const data::CandidatePool& pool,
                           const nn::ParamVector& theta,
                           const solver::LambdaTable& lambdas,
                           const score::FusionConfig& fusion) {
  return score::BuildScoreReport(grad::PoolMargins(pool, theta), lambdas,
                                 fusion);
}

absl::StatusOr<AttackResult> RunImpMia(const data::CandidatePool& pool,
                                       const nn::ArchSpec& arch,
                                       const nn::ParamVector& theta,
                                       const AttackConfig& cfg) {
  if (absl::Status s = cfg.solver.Validate(); !s.ok()) return s;
  if (absl::Status s = cfg.fusion.Validate(); !s.ok()) return s;
  if (cfg.threads < 1) return absl::InvalidArgumentError("threads must be >= 1");
  for (const std::string& dir : {cfg.blocks_cache_dir, cfg.trace_dir}) {
    if (dir.empty()) continue;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      return absl::UnavailableError(
          absl::StrCat("cannot create ", dir, ": ", ec.message()));
    }
  }

  absl::StatusOr<std::vector<grad::ViewSet>> viewsets =
      grad::Prefilter(pool, arch, theta);
  if (!viewsets.ok()) return viewsets.status();

  if (!std::isinf(cfg.margin_filter_width)) {
    std::vector<solver::MarginRecord> records;
    for (const grad::ViewSet& vs : *viewsets) {
      records.push_back({vs.sample_id, vs.label, vs.margin});
    }
    const std::vector<uint64_t> keep =
        solver::MarginIntervalFilter(records, cfg.margin_filter_width);
    const std::unordered_set<uint64_t> keep_set(keep.begin(), keep.end());
    std::erase_if(*viewsets, [&](const grad::ViewSet& vs) {
      return keep_set.count(vs.sample_id) == 0;
    });
  }

  AttackResult result;
  result.retained_candidates = static_cast<int>(viewsets->size());
  absl::StatusOr<grad::BlockLayout> layout = grad::MakeBlockLayout(
      arch, grad::LastLayers(arch, cfg.last_k_layers), cfg.block_size_target);
  if (!layout.ok()) return layout.status();
  result.layout = *layout;

  std::unordered_map<uint64_t, double> margin_of;
  for (const grad::ViewSet& vs : *viewsets) margin_of[vs.sample_id] = vs.margin;
  const grad::ViewGradients gradients =
      grad::ComputeViewGradients(*viewsets, theta);

  const int num_blocks = static_cast<int>(layout->blocks.size());
  std::vector<BlockOutcome> outcomes(num_blocks);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int b = next.fetch_add(1); b < num_blocks; b = next.fetch_add(1)) {
      BlockOutcome& out = outcomes[b];
      absl::StatusOr<grad::GradientBlock> block =
          LoadOrAssemble(cfg, *layout, b, gradients, theta);
      if (!block.ok()) {
        out.status = block.status();
        continue;
      }
      Eigen::VectorXd margins(block->cols());
      for (int j = 0; j < block->cols(); ++j) {
        margins(j) = margin_of.at(block->column_index[j].sample_id);
      }
      const bool trace = !cfg.trace_dir.empty();
      absl::StatusOr<solver::BlockSolution> sol =
          solver::SolveBlock(*block, margins, cfg.solver, trace);
      if (!sol.ok()) {
        out.status = sol.status();
        continue;
      }
      if (trace) {
        const std::string path =
            (std::filesystem::path(cfg.trace_dir) /
             absl::StrCat("trace_block_", b, ".csv"))
                .string();
        if (absl::Status s = solver::WriteSolverTrace(path, sol->trace);
            !s.ok()) {
          out.status = s;
          continue;
        }
      }
      absl::StatusOr<Eigen::VectorXd> z =
          solver::DebiasAndZscore(sol->coefficients, block->column_norms);
      if (!z.ok()) {
        out.status = z.status();
        continue;
      }
      out.raw = std::move(sol->coefficients);
      out.z = *std::move(z);
      out.block = *std::move(block);
      // Columns are no longer needed once solved.
      out.block.columns.resize(0, 0);
      out.block.columns_f32.resize(0, 0);
    }
  };
  const int threads = std::min(cfg.threads, std::max(num_blocks, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool_threads;
    for (int t = 0; t < threads; ++t) pool_threads.emplace_back(worker);
    for (std::thread& t : pool_threads) t.join();
  }

  for (int b = 0; b < num_blocks; ++b) {
    BlockOutcome& out = outcomes[b];
    if (!out.status.ok()) {
      // Abort only this block; the run continues and records the gap.
      result.lambdas.failed_blocks.emplace_back(b, out.status.ToString());
      continue;
    }
    result.dropped_columns += static_cast<int>(out.block.dropped.size());
    solver::AppendBlock(out.block, out.raw, out.z, &result.lambdas);
  }
  if (result.lambdas.entries.empty()) {
    return absl::InternalError("every block failed to solve");
  }
  result.report = Rescore(pool, theta, result.lambdas, cfg.fusion);
  return result;
}

}  // namespace kktmia::attack
