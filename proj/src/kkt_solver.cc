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

#include "kktmia/kkt_solver.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace kktmia::solver {
namespace {

Eigen::VectorXd Apply(const grad::GradientBlock& block,
                      const Eigen::VectorXd& lambda) {
  if (block.precision == grad::Precision::kF32) {
    return (block.columns_f32 * lambda.cast<float>()).cast<double>();
  }
  return block.columns * lambda;
}

Eigen::VectorXd ApplyTransposed(const grad::GradientBlock& block,
                                const Eigen::VectorXd& r) {
  if (block.precision == grad::Precision::kF32) {
    return (block.columns_f32.transpose() * r.cast<float>()).cast<double>();
  }
  return block.columns.transpose() * r;
}

// Objective terms at lambda given u = A lambda; fills the gradient if asked.
ObjectiveTerms Evaluate(const grad::GradientBlock& block,
                        const Eigen::VectorXd& lambda,
                        const Eigen::VectorXd& u,
                        const Eigen::VectorXd& margins,
                        const SolverConfig& cfg, Eigen::VectorXd* grad) {
  ObjectiveTerms t;
  const Eigen::VectorXd& target = block.theta_block;
  const double u_norm = u.norm();
  const double t_norm = target.norm();
  Eigen::VectorXd cos_grad_u;
  if (u_norm == 0.0 || t_norm == 0.0) {
    t.degenerate = true;
    t.cosine_term = 1.0;
    // Steepest-descent direction of the cosine term at the origin.
    if (grad != nullptr) cos_grad_u = -target / std::max(t_norm, 1e-300);
  } else {
    const double cosine = u.dot(target) / (u_norm * t_norm);
    t.cosine_term = 1.0 - cosine;
    if (grad != nullptr) {
      cos_grad_u = -(target / (u_norm * t_norm) - cosine * u / (u_norm * u_norm));
    }
  }
  const Eigen::ArrayXd negative = lambda.array().min(0.0);
  t.neg_term = negative.square().sum();
  t.marg_term = (lambda.array().square() * margins.array()).sum();
  t.total = t.cosine_term + cfg.alpha * t.neg_term + cfg.beta * t.marg_term;
  if (grad != nullptr) {
    *grad = ApplyTransposed(block, cos_grad_u);
    *grad += (2.0 * cfg.alpha * negative).matrix();
    *grad += (2.0 * cfg.beta * lambda.array() * margins.array()).matrix();
  }
  return t;
}

}  // namespace

absl::Status SolverConfig::Validate() const {
  if (!(alpha >= 0) || !(beta >= 0)) {
    return absl::InvalidArgumentError("alpha and beta must be nonnegative");
  }
  if (max_iters < 1) return absl::InvalidArgumentError("max_iters must be >= 1");
  if (!(base_learning_rate > 0)) {
    return absl::InvalidArgumentError("base_learning_rate must be positive");
  }
  if (!(clip_norm > 0)) {
    return absl::InvalidArgumentError("clip_norm must be positive");
  }
  if (!(weight_decay >= 0)) {
    return absl::InvalidArgumentError("weight_decay must be nonnegative");
  }
  if (early_stop_patience < 1) {
    return absl::InvalidArgumentError("early_stop_patience must be >= 1");
  }
  return absl::OkStatus();
}

ObjectiveTerms Objective(const grad::GradientBlock& block,
                         const Eigen::VectorXd& lambda,
                         const Eigen::VectorXd& margins,
                         const SolverConfig& cfg) {
  return Evaluate(block, lambda, Apply(block, lambda), margins, cfg, nullptr);
}

absl::StatusOr<BlockSolution> SolveBlock(const grad::GradientBlock& block,
                                         const Eigen::VectorXd& margins,
                                         const SolverConfig& cfg,
                                         bool record_trace) {
  if (absl::Status s = cfg.Validate(); !s.ok()) return s;
  const int m = block.cols();
  if (margins.size() != m) {
    return absl::InvalidArgumentError("one margin per column is required");
  }
  if (m == 0) return absl::FailedPreconditionError("block has no columns");

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd first = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd grad(m);

  BlockSolution sol;
  sol.coefficients = lambda;
  sol.best.total = std::numeric_limits<double>::infinity();
  int stall = 0;
  double beta1_power = 1.0;
  double beta2_power = 1.0;

  for (int it = 0; it < cfg.max_iters; ++it) {
    const double lr = 0.5 * cfg.base_learning_rate *
                      (1.0 + std::cos(std::numbers::pi * it / cfg.max_iters));
    const ObjectiveTerms terms =
        Evaluate(block, lambda, Apply(block, lambda), margins, cfg, &grad);
    if (!std::isfinite(terms.total) || !grad.allFinite()) {
      return absl::InternalError(absl::StrCat(
          "block ", block.block_id, ": non-finite objective at iteration ", it));
    }
    if (record_trace) sol.trace.push_back({it, terms, lr});
    if (terms.total < sol.best.total - cfg.early_stop_tol) {
      stall = 0;
    } else {
      ++stall;
    }
    if (terms.total < sol.best.total) {
      sol.best = terms;
      sol.coefficients = lambda;
    }
    sol.best_history.push_back(sol.best.total);
    sol.iterations = it + 1;
    if (stall >= cfg.early_stop_patience) break;

    const double g_norm = grad.norm();
    if (g_norm > cfg.clip_norm) grad *= cfg.clip_norm / g_norm;
    lambda *= 1.0 - lr * cfg.weight_decay;
    first = kBeta1 * first + (1.0 - kBeta1) * grad;
    second = kBeta2 * second + (1.0 - kBeta2) * grad.cwiseAbs2();
    beta1_power *= kBeta1;
    beta2_power *= kBeta2;
    const Eigen::ArrayXd m_hat = first.array() / (1.0 - beta1_power);
    const Eigen::ArrayXd v_hat = second.array() / (1.0 - beta2_power);
    lambda.array() -= lr * m_hat / (v_hat.sqrt() + kEps);
  }
  return sol;
}

Eigen::VectorXd ZScore(const Eigen::VectorXd& v) {
  const int64_t n = v.size();
  if (n == 0) return v;
  const double mean = v.mean();
  const double var = (v.array() - mean).square().sum() / n;
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) return Eigen::VectorXd::Zero(n);
  return ((v.array() - mean) / sd).matrix();
}

absl::StatusOr<Eigen::VectorXd> DebiasAndZscore(const Eigen::VectorXd& raw,
                                                const Eigen::VectorXd& norms) {
  if (raw.size() != norms.size()) {
    return absl::InvalidArgumentError("coefficient and norm lengths differ");
  }
  if ((norms.array() <= 0.0).any()) {
    return absl::InvalidArgumentError("column norms must be positive");
  }
  return ZScore((raw.array() / norms.array()).matrix());
}

LeastSquaresResult ExactSolve(const Eigen::MatrixXd& a,
                              const Eigen::VectorXd& b) {
  LeastSquaresResult out;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  if (cod.rank() < a.cols()) {
    out.rank_deficient = true;
    out.coefficients = cod.solve(b);
    return out;
  }
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += 1e-10;
  out.coefficients = gram.ldlt().solve(a.transpose() * b);
  return out;
}

LeastSquaresResult ExactSolve(const grad::GradientBlock& block) {
  return ExactSolve(block.DenseColumns(), block.theta_block);
}

namespace {

// Linear-interpolation quantile of sorted values.
double Quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * (sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<uint64_t> MarginIntervalFilter(
    const std::vector<MarginRecord>& records, double width) {
  constexpr int kBins = 64;
  std::map<int, std::vector<double>> by_class;
  for (const MarginRecord& r : records) by_class[r.label].push_back(r.margin);

  struct ClassWindow {
    double lo, bin_width, mode, radius;
    int modal_bin;
    bool pass_all;
  };
  std::map<int, ClassWindow> windows;
  for (auto& [label, margins] : by_class) {
    ClassWindow w{};
    std::sort(margins.begin(), margins.end());
    const double lo = margins.front();
    const double hi = margins.back();
    if (margins.size() == 1 || hi == lo || std::isinf(width)) {
      w.pass_all = true;
      windows[label] = w;
      continue;
    }
    w.lo = lo;
    w.bin_width = (hi - lo) / kBins;
    std::vector<int> counts(kBins, 0);
    for (double m : margins) {
      ++counts[std::min(kBins - 1, static_cast<int>((m - lo) / w.bin_width))];
    }
    w.modal_bin = static_cast<int>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    w.mode = lo + (w.modal_bin + 0.5) * w.bin_width;
    w.radius = width * (Quantile(margins, 0.75) - Quantile(margins, 0.25));
    windows[label] = w;
  }

  std::vector<uint64_t> kept;
  for (const MarginRecord& r : records) {
    const ClassWindow& w = windows[r.label];
    if (w.pass_all) {
      kept.push_back(r.sample_id);
      continue;
    }
    const int bin =
        std::min(kBins - 1, static_cast<int>((r.margin - w.lo) / w.bin_width));
    if (bin == w.modal_bin || std::abs(r.margin - w.mode) <= w.radius) {
      kept.push_back(r.sample_id);
    }
  }
  return kept;
}

void AppendBlock(const grad::GradientBlock& block,
                 const Eigen::VectorXd& raw_coefficients,
                 const Eigen::VectorXd& zscored, LambdaTable* table) {
  for (int j = 0; j < block.cols(); ++j) {
    table->entries.push_back({block.column_index[j].sample_id,
                              block.column_index[j].view_id, block.block_id,
                              raw_coefficients(j), zscored(j)});
  }
}

absl::Status WriteSolverTrace(const std::string& path,
                              const std::vector<TracePoint>& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path));
  out << "iteration,total,cosine_term,neg_term,marg_term,lr\n";
  for (const TracePoint& p : trace) {
    out << absl::StrFormat("%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", p.iteration,
                           p.terms.total, p.terms.cosine_term,
                           p.terms.neg_term, p.terms.marg_term,
                           p.learning_rate);
  }
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

}  // namespace kktmia::solver
