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

#ifndef KKTMIA_GRAD_MATRIX_H_
#define KKTMIA_GRAD_MATRIX_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "kktmia/data_lab.h"
#include "kktmia/nn_engine.h"

namespace kktmia::grad {

// Margin and prediction of one pool sample on its original view.
struct SampleMargin {
  uint64_t sample_id = 0;
  int label = 0;
  int predicted_class = 0;
  double margin = 0.0;
};

std::vector<SampleMargin> PoolMargins(const data::CandidatePool& pool,
                                      const nn::ParamVector& theta);

// A retained candidate and the inputs whose margin gradients become columns.
// views[0] is the original; views[1], when present, its mirror image.
struct ViewSet {
  uint64_t sample_id = 0;
  int label = 0;
  double margin = 0.0;
  std::vector<Eigen::VectorXd> views;
};

// Keeps candidates with margin >= 0 on the original view, in pool order.
// Fails with FailedPrecondition when nothing survives.
absl::StatusOr<std::vector<ViewSet>> Prefilter(const data::CandidatePool& pool,
                                               const nn::ArchSpec& arch,
                                               const nn::ParamVector& theta);

struct IndexRange {
  int64_t begin = 0;
  int64_t end = 0;

  int64_t size() const { return end - begin; }
};

struct Block {
  int block_id = 0;
  int layer = 0;
  std::vector<IndexRange> ranges;

  int64_t size() const;
};

struct BlockLayout {
  std::vector<Block> blocks;
  int64_t block_size_target = 0;
};

// Indices of the last `k` weight layers; k <= 0 selects every layer.
std::vector<int> LastLayers(const nn::ArchSpec& arch, int k);

// Greedily packs whole weight rows (one output neuron's incoming weights)
// into blocks of at most `block_size_target` parameters. Layers are visited in
// order and a block never spans two layers.
absl::StatusOr<BlockLayout> MakeBlockLayout(const nn::ArchSpec& arch,
                                            const std::vector<int>& layers,
                                            int64_t block_size_target);

enum class Precision { kF64, kF32 };

std::string_view PrecisionName(Precision p);
absl::StatusOr<Precision> ParsePrecision(std::string_view name);

struct ColumnKey {
  uint64_t sample_id = 0;
  int view_id = 0;

  bool operator==(const ColumnKey&) const = default;
};

// One block of the gradient matrix, ready for the coefficient solver.
//
// Raw column g (the block slice of a margin gradient) is processed as
//   column_norms[i] = ||g||,  a = (g - row_center) / ||g - row_center||
// where row_center is the mean over columns of each row. theta_block is the
// block slice of theta minus its own scalar mean, scaled to unit norm.
struct GradientBlock {
  int block_id = 0;
  Precision precision = Precision::kF64;
  // p_b x M_v; only the matrix matching `precision` is populated.
  Eigen::MatrixXd columns;
  Eigen::MatrixXf columns_f32;
  Eigen::VectorXd column_norms;
  Eigen::VectorXd row_center;
  Eigen::VectorXd theta_block;
  std::vector<ColumnKey> column_index;
  // Columns removed because they were identically zero.
  std::vector<ColumnKey> dropped;

  int64_t rows() const { return theta_block.size(); }
  int cols() const { return static_cast<int>(column_index.size()); }
  // Column matrix in double precision regardless of storage.
  Eigen::MatrixXd DenseColumns() const;
};

// Margin gradients of every view, one column each (p x M_v).
struct ViewGradients {
  Eigen::MatrixXd gradients;
  std::vector<ColumnKey> keys;
};

ViewGradients ComputeViewGradients(const std::vector<ViewSet>& viewsets,
                                   const nn::ParamVector& theta);

// Centers and normalizes raw block columns. Zero columns are dropped.
absl::StatusOr<GradientBlock> ProcessBlock(int block_id,
                                           const Eigen::MatrixXd& raw_columns,
                                           const std::vector<ColumnKey>& keys,
                                           const Eigen::VectorXd& theta_slice,
                                           Precision precision);

// Slices precomputed view gradients to one block.
absl::StatusOr<GradientBlock> AssembleBlock(const BlockLayout& layout,
                                            int block_id,
                                            const ViewGradients& gradients,
                                            const nn::ParamVector& theta,
                                            Precision precision);

// Recomputes the gradients for this block only.
absl::StatusOr<GradientBlock> AssembleBlock(const BlockLayout& layout,
                                            int block_id,
                                            const std::vector<ViewSet>& viewsets,
                                            const nn::ArchSpec& arch,
                                            const nn::ParamVector& theta,
                                            Precision precision);

// Block cache file:
//
//   kktmia-block 1
//   block_id <b>
//   rows <p_b>
//   cols <M_v>
//   precision <f64|f32>
//   column <sample_id> <view_id>      (M_v lines, column order)
//   dropped <sample_id> <view_id>     (zero or more)
//   end
//
// then the column-major column matrix in the stated precision, column_norms
// (M_v float64), theta_block (p_b float64) and row_center (p_b float64), all
// little-endian.
absl::Status WriteBlockCache(const std::string& path,
                             const GradientBlock& block);
absl::StatusOr<GradientBlock> ReadBlockCache(const std::string& path);

}  // namespace kktmia::grad

#endif  // KKTMIA_GRAD_MATRIX_H_
