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

#include "kktmia/grad_matrix.h"

#include <fstream>
#include <sstream>

#include "absl/strings/str_cat.h"
#include "kktmia/binary_io.h"

namespace kktmia::grad {

std::vector<SampleMargin> PoolMargins(const data::CandidatePool& pool,
                                      const nn::ParamVector& theta) {
  const int n = static_cast<int>(pool.samples.size());
  std::vector<SampleMargin> out;
  if (n == 0) return out;
  Eigen::MatrixXd x(pool.d, n);
  for (int i = 0; i < n; ++i) x.col(i) = pool.samples[i].x;
  const Eigen::MatrixXd logits = nn::ForwardBatch(theta, x);
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const data::Sample& s = pool.samples[i];
    out.push_back({s.id, s.y, nn::PredictedClass(logits.col(i)),
                   nn::MarginFromLogits(logits.col(i), s.y)});
  }
  return out;
}

absl::StatusOr<std::vector<ViewSet>> Prefilter(const data::CandidatePool& pool,
                                               const nn::ArchSpec& arch,
                                               const nn::ParamVector& theta) {
  if (!theta.Matches(arch)) {
    return absl::InvalidArgumentError("parameter vector does not match arch");
  }
  if (pool.d != arch.input_dim || pool.num_classes != arch.num_classes) {
    return absl::InvalidArgumentError("pool dimensions do not match arch");
  }
  const bool flips = pool.image_shaped && nn::GridWidth(pool.d) > 0;
  const std::vector<SampleMargin> margins = PoolMargins(pool, theta);
  std::vector<ViewSet> kept;
  for (size_t i = 0; i < margins.size(); ++i) {
    if (margins[i].margin < 0.0) continue;
    const data::Sample& s = pool.samples[i];
    ViewSet vs{s.id, s.y, margins[i].margin, {s.x}};
    if (flips) vs.views.push_back(nn::FlipHorizontal(s.x));
    kept.push_back(std::move(vs));
  }
  if (kept.empty()) {
    return absl::FailedPreconditionError("no correctly classified candidates");
  }
  return kept;
}

int64_t Block::size() const {
  int64_t total = 0;
  for (const IndexRange& r : ranges) total += r.size();
  return total;
}

std::vector<int> LastLayers(const nn::ArchSpec& arch, int k) {
  const int layers = arch.NumLayers();
  const int first = (k <= 0 || k >= layers) ? 0 : layers - k;
  std::vector<int> out;
  for (int l = first; l < layers; ++l) out.push_back(l);
  return out;
}

absl::StatusOr<BlockLayout> MakeBlockLayout(const nn::ArchSpec& arch,
                                            const std::vector<int>& layers,
                                            int64_t block_size_target) {
  if (absl::Status s = arch.Validate(); !s.ok()) return s;
  if (layers.empty()) return absl::InvalidArgumentError("no layers selected");
  const std::vector<nn::LayerLayout> table = nn::MakeLayout(arch);
  BlockLayout layout;
  layout.block_size_target = block_size_target;
  int previous = -1;
  for (int l : layers) {
    if (l < 0 || l >= arch.NumLayers() || l <= previous) {
      return absl::InvalidArgumentError(
          "selected layers must be distinct, ascending and in range");
    }
    previous = l;
    const nn::LayerLayout& e = table[l];
    if (e.cols > block_size_target) {
      return absl::InvalidArgumentError(absl::StrCat(
          "layer ", l, " has rows of ", e.cols,
          " weights, more than the block size target ", block_size_target));
    }
    const int rows_per_block = static_cast<int>(block_size_target / e.cols);
    for (int r = 0; r < e.rows; r += rows_per_block) {
      const int rows = std::min(rows_per_block, e.rows - r);
      const int64_t begin = e.offset + static_cast<int64_t>(r) * e.cols;
      Block b;
      b.block_id = static_cast<int>(layout.blocks.size());
      b.layer = l;
      b.ranges.push_back({begin, begin + static_cast<int64_t>(rows) * e.cols});
      layout.blocks.push_back(std::move(b));
    }
  }
  return layout;
}

std::string_view PrecisionName(Precision p) {
  return p == Precision::kF32 ? "f32" : "f64";
}

absl::StatusOr<Precision> ParsePrecision(std::string_view name) {
  if (name == "f64") return Precision::kF64;
  if (name == "f32") return Precision::kF32;
  return absl::InvalidArgumentError(absl::StrCat("unknown precision '", std::string(name), "'"));
}

Eigen::MatrixXd GradientBlock::DenseColumns() const {
  if (precision == Precision::kF32) return columns_f32.cast<double>();
  return columns;
}

ViewGradients ComputeViewGradients(const std::vector<ViewSet>& viewsets,
                                   const nn::ParamVector& theta) {
  ViewGradients out;
  int total = 0;
  for (const ViewSet& vs : viewsets) total += static_cast<int>(vs.views.size());
  if (total == 0) return out;
  const int d = static_cast<int>(viewsets[0].views[0].size());
  const int classes = theta.layout().back().rows;
  Eigen::MatrixXd x(d, total);
  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(classes, total);
  int col = 0;
  for (const ViewSet& vs : viewsets) {
    for (size_t v = 0; v < vs.views.size(); ++v) {
      x.col(col) = vs.views[v];
      out.keys.push_back({vs.sample_id, static_cast<int>(v)});
      ++col;
    }
  }
  const Eigen::MatrixXd logits = nn::ForwardBatch(theta, x);
  col = 0;
  for (const ViewSet& vs : viewsets) {
    for (size_t v = 0; v < vs.views.size(); ++v, ++col) {
      upstream(vs.label, col) = 1.0;
      upstream(nn::RunnerUpClass(logits.col(col), vs.label), col) = -1.0;
    }
  }
  out.gradients = nn::PerSampleGradients(theta, x, upstream);
  return out;
}

absl::StatusOr<GradientBlock> ProcessBlock(int block_id,
                                           const Eigen::MatrixXd& raw_columns,
                                           const std::vector<ColumnKey>& keys,
                                           const Eigen::VectorXd& theta_slice,
                                           Precision precision) {
  if (raw_columns.cols() != static_cast<int64_t>(keys.size()) ||
      raw_columns.rows() != theta_slice.size()) {
    return absl::InvalidArgumentError("block shape mismatch");
  }
  GradientBlock block;
  block.block_id = block_id;
  block.precision = precision;

  Eigen::VectorXd centered_theta =
      theta_slice.array() - theta_slice.mean();
  const double theta_norm = centered_theta.norm();
  if (theta_norm == 0.0) {
    return absl::FailedPreconditionError(
        absl::StrCat("block ", block_id, ": target vector is constant"));
  }
  block.theta_block = centered_theta / theta_norm;

  std::vector<int> kept;
  for (int i = 0; i < raw_columns.cols(); ++i) {
    if (raw_columns.col(i).squaredNorm() > 0.0) {
      kept.push_back(i);
    } else {
      block.dropped.push_back(keys[i]);
    }
  }
  Eigen::MatrixXd cols(raw_columns.rows(), static_cast<int64_t>(kept.size()));
  Eigen::VectorXd norms(static_cast<int64_t>(kept.size()));
  for (size_t j = 0; j < kept.size(); ++j) {
    cols.col(j) = raw_columns.col(kept[j]);
    norms(j) = cols.col(j).norm();
  }
  // With one column the row mean is the column itself, so centering would
  // erase it; single-column blocks are only normalized.
  block.row_center = Eigen::VectorXd::Zero(raw_columns.rows());
  if (cols.cols() > 1) {
    block.row_center = cols.rowwise().mean();
    cols.colwise() -= block.row_center;
  }

  std::vector<int> final_index;
  for (int j = 0; j < cols.cols(); ++j) {
    const double n = cols.col(j).norm();
    if (n > 0.0) {
      cols.col(j) /= n;
      final_index.push_back(j);
    } else {
      block.dropped.push_back(keys[kept[j]]);
    }
  }
  if (static_cast<int64_t>(final_index.size()) != cols.cols()) {
    Eigen::MatrixXd pruned(cols.rows(), static_cast<int64_t>(final_index.size()));
    Eigen::VectorXd pruned_norms(static_cast<int64_t>(final_index.size()));
    for (size_t j = 0; j < final_index.size(); ++j) {
      pruned.col(j) = cols.col(final_index[j]);
      pruned_norms(j) = norms(final_index[j]);
    }
    cols = std::move(pruned);
    norms = std::move(pruned_norms);
  }
  for (int j : final_index) block.column_index.push_back(keys[kept[j]]);
  block.column_norms = std::move(norms);
  if (precision == Precision::kF32) {
    block.columns_f32 = cols.cast<float>();
  } else {
    block.columns = std::move(cols);
  }
  return block;
}

namespace {

Eigen::VectorXd SliceRows(const Eigen::VectorXd& v, const Block& b) {
  Eigen::VectorXd out(b.size());
  int64_t at = 0;
  for (const IndexRange& r : b.ranges) {
    out.segment(at, r.size()) = v.segment(r.begin, r.size());
    at += r.size();
  }
  return out;
}

Eigen::MatrixXd SliceRows(const Eigen::MatrixXd& m, const Block& b) {
  Eigen::MatrixXd out(b.size(), m.cols());
  int64_t at = 0;
  for (const IndexRange& r : b.ranges) {
    out.middleRows(at, r.size()) = m.middleRows(r.begin, r.size());
    at += r.size();
  }
  return out;
}

absl::StatusOr<const Block*> FindBlock(const BlockLayout& layout, int id) {
  if (id < 0 || id >= static_cast<int>(layout.blocks.size()) ||
      layout.blocks[id].block_id != id) {
    return absl::InvalidArgumentError(absl::StrCat("no block ", id));
  }
  return &layout.blocks[id];
}

}  // namespace

absl::StatusOr<GradientBlock> AssembleBlock(const BlockLayout& layout,
                                            int block_id,
                                            const ViewGradients& gradients,
                                            const nn::ParamVector& theta,
                                            Precision precision) {
  absl::StatusOr<const Block*> block = FindBlock(layout, block_id);
  if (!block.ok()) return block.status();
  if (gradients.gradients.rows() != theta.size()) {
    return absl::InvalidArgumentError("gradient rows do not match theta");
  }
  return ProcessBlock(block_id, SliceRows(gradients.gradients, **block),
                      gradients.keys, SliceRows(theta.values(), **block),
                      precision);
}

absl::StatusOr<GradientBlock> AssembleBlock(const BlockLayout& layout,
                                            int block_id,
                                            const std::vector<ViewSet>& viewsets,
                                            const nn::ArchSpec& arch,
                                            const nn::ParamVector& theta,
                                            Precision precision) {
  if (!theta.Matches(arch)) {
    return absl::InvalidArgumentError("parameter vector does not match arch");
  }
  return AssembleBlock(layout, block_id, ComputeViewGradients(viewsets, theta),
                       theta, precision);
}

absl::Status WriteBlockCache(const std::string& path,
                             const GradientBlock& block) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path));
  out << "kktmia-block 1\n";
  out << "block_id " << block.block_id << "\n";
  out << "rows " << block.rows() << "\n";
  out << "cols " << block.cols() << "\n";
  out << "precision " << PrecisionName(block.precision) << "\n";
  for (const ColumnKey& k : block.column_index) {
    out << "column " << k.sample_id << " " << k.view_id << "\n";
  }
  for (const ColumnKey& k : block.dropped) {
    out << "dropped " << k.sample_id << " " << k.view_id << "\n";
  }
  out << "end\n";
  const int64_t rows = block.rows();
  for (int j = 0; j < block.cols(); ++j) {
    for (int64_t r = 0; r < rows; ++r) {
      if (block.precision == Precision::kF32) {
        io::WriteF32(out, block.columns_f32(r, j));
      } else {
        io::WriteF64(out, block.columns(r, j));
      }
    }
  }
  for (int j = 0; j < block.cols(); ++j) io::WriteF64(out, block.column_norms(j));
  for (int64_t r = 0; r < rows; ++r) io::WriteF64(out, block.theta_block(r));
  for (int64_t r = 0; r < rows; ++r) io::WriteF64(out, block.row_center(r));
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<GradientBlock> ReadBlockCache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::string line;
  if (!std::getline(in, line) || line != "kktmia-block 1") {
    return absl::DataLossError(absl::StrCat(path, ": not a block cache"));
  }
  GradientBlock block;
  int64_t rows = -1;
  int cols = -1;
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
    if (key == "block_id") {
      ok = static_cast<bool>(fields >> block.block_id);
    } else if (key == "rows") {
      ok = static_cast<bool>(fields >> rows);
    } else if (key == "cols") {
      ok = static_cast<bool>(fields >> cols);
    } else if (key == "precision") {
      std::string name;
      fields >> name;
      absl::StatusOr<Precision> p = ParsePrecision(name);
      ok = p.ok();
      if (ok) block.precision = *p;
    } else if (key == "column" || key == "dropped") {
      ColumnKey k;
      ok = static_cast<bool>(fields >> k.sample_id >> k.view_id);
      (key == "column" ? block.column_index : block.dropped).push_back(k);
    } else {
      ok = false;
    }
    if (!ok) {
      return absl::DataLossError(
          absl::StrCat(path, ": bad header line '", line, "'"));
    }
  }
  if (!ended || rows < 0 || cols < 0 ||
      static_cast<int>(block.column_index.size()) != cols) {
    return absl::DataLossError(absl::StrCat(path, ": inconsistent header"));
  }
  const auto truncated = [&] {
    return absl::DataLossError(absl::StrCat(path, ": truncated arrays"));
  };
  if (block.precision == Precision::kF32) {
    block.columns_f32.resize(rows, cols);
  } else {
    block.columns.resize(rows, cols);
  }
  for (int j = 0; j < cols; ++j) {
    for (int64_t r = 0; r < rows; ++r) {
      bool ok = block.precision == Precision::kF32
                    ? io::ReadF32(in, &block.columns_f32(r, j))
                    : io::ReadF64(in, &block.columns(r, j));
      if (!ok) return truncated();
    }
  }
  block.column_norms.resize(cols);
  for (int j = 0; j < cols; ++j) {
    if (!io::ReadF64(in, &block.column_norms(j))) return truncated();
  }
  block.theta_block.resize(rows);
  for (int64_t r = 0; r < rows; ++r) {
    if (!io::ReadF64(in, &block.theta_block(r))) return truncated();
  }
  block.row_center.resize(rows);
  for (int64_t r = 0; r < rows; ++r) {
    if (!io::ReadF64(in, &block.row_center(r))) return truncated();
  }
  return block;
}

}  // namespace kktmia::grad
