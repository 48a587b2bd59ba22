// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "stalab/numkernel.h"
#include "stalab/stapune.h"
#include "stalab/tokens.h"
#include "stalab/vitcore.h"

namespace sta {

/// Temporal redundancy of a clip: for each token of the last frame, the best
/// cosine match in every earlier frame, summed over frames and averaged over
/// the last frame's tokens. Identical frames give n_t - 1. Throws DomainError
/// on a zero-norm token.
double trajectory_sum(const TokenTensor& x);

struct BlockFlops {
  int block = 0;  // 1-based
  std::int64_t tokens = 0;
  std::int64_t macs = 0;
};

// One multiply-accumulate counts as one FLOP.
struct FlopsReport {
  std::vector<BlockFlops> per_block;
  std::int64_t embed_macs = 0;
  std::int64_t head_macs = 0;
  std::int64_t total_macs = 0;
  std::int64_t baseline_total_macs = 0;
  double reduction_fraction = 0.0;

  double gflops() const { return static_cast<double>(total_macs) * 1e-9; }
  double baseline_gflops() const {
    return static_cast<double>(baseline_total_macs) * 1e-9;
  }
};

// Per block with n live tokens: QKV 3nd^2, logits n^2 d, mixing n^2 d, output
// projection nd^2, MLP 8nd^2. Layer norm, softmax and GELU are not counted.
std::int64_t block_macs(std::int64_t tokens, std::int64_t dim);

FlopsReport flops_model(const ModelConfig& cfg,
                        const std::optional<StaConfig>& sta);

enum class LossKind {
  kCrossEntropy,  // -log softmax(logits)[label]
  kLogit,         // logits[label]; linear in the head input
};

struct GradHeatmap {
  std::size_t frames = 0;
  std::size_t spatial = 0;
  std::vector<double> values;  // frames x spatial
  double step_size = 0.0;

  double at(std::size_t t, std::size_t s) const {
    return values[t * spatial + s];
  }
};

// Sum over channels of |d loss / d x(row, c)| per row, by central
// differences with step h.
std::vector<double> fd_abs_gradient(
    const BasicMatrix<double>& x,
    const std::function<double(const BasicMatrix<double>&)>& loss, double h);

/// Per-token gradient norm summed over block inputs 1..L (unpruned model),
/// by central finite differences evaluated in double precision. A model with
/// no blocks is probed at the head input.
GradHeatmap gradnorm_fd(const Video& video, const ModelConfig& cfg,
                        const Weights& weights, int label, double h,
                        LossKind loss = LossKind::kCrossEntropy);

struct RetentionStats {
  double top_decile_retention = 0.0;
  std::vector<double> per_frame_overlap;
};

// Top decile = the ceil(n_s / 10) highest semantic scores of each frame
// (lower index first on ties).
RetentionStats retention_stats(const SelectionTrace& trace,
                               const std::vector<std::vector<float>>& f_sem);

}  // namespace sta
