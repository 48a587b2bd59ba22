// SPDX-License-Identifier: Apache-2.0
#include "stalab/diagnostics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "stalab/error.h"

namespace sta {
namespace {

double norm(std::span<const float> v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

double loss_from_logits(const std::vector<double>& logits, int label,
                        LossKind kind) {
  const double picked = logits[static_cast<std::size_t>(label)];
  if (kind == LossKind::kLogit) return picked;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - peak);
  return peak + std::log(total) - picked;
}

}  // namespace

double trajectory_sum(const TokenTensor& x) {
  if (x.frames == 0) throw DomainError("trajectory_sum: empty clip");
  if (x.frames == 1 || x.spatial == 0) return 0.0;
  std::vector<double> norms(x.tokens());
  for (std::size_t t = 0; t < x.frames; ++t) {
    for (std::size_t s = 0; s < x.spatial; ++s) {
      const double n = norm(x.token(t, s));
      if (n == 0.0) {
        throw DomainError("trajectory_sum: zero-norm token at frame " +
                          std::to_string(t) + ", index " + std::to_string(s));
      }
      norms[t * x.spatial + s] = n;
    }
  }
  const std::size_t last = x.frames - 1;
  double total = 0.0;
  for (std::size_t i = 0; i < x.spatial; ++i) {
    const auto probe = x.token(last, i);
    for (std::size_t t = 0; t < last; ++t) {
      double best = -1.0;
      for (std::size_t j = 0; j < x.spatial; ++j) {
        const auto other = x.token(t, j);
        double dot = 0.0;
        for (std::size_t c = 0; c < x.channels; ++c)
          dot += static_cast<double>(probe[c]) * other[c];
        // Clamp rounding excursions past +-1.
        const double cos = std::clamp(
            dot / (norms[last * x.spatial + i] * norms[t * x.spatial + j]),
            -1.0, 1.0);
        best = std::max(best, cos);
      }
      total += best;
    }
  }
  return total / static_cast<double>(x.spatial);
}

std::int64_t block_macs(std::int64_t tokens, std::int64_t dim) {
  return 12 * tokens * dim * dim + 2 * tokens * tokens * dim;
}

FlopsReport flops_model(const ModelConfig& cfg,
                        const std::optional<StaConfig>& sta) {
  cfg.validate();
  const std::int64_t d = cfg.dim;
  const std::int64_t n_t = cfg.frame_tokens();
  const std::int64_t n_s = cfg.spatial_tokens();
  std::vector<StagePlan> plan;
  if (sta) plan = resolve_plan(*sta, cfg.depth, static_cast<int>(n_s));

  FlopsReport rep;
  rep.embed_macs = n_t * n_s * cfg.tube_volume() * d;
  rep.head_macs = d * cfg.classes;
  std::int64_t spatial = n_s;
  std::size_t next = 0;
  std::int64_t blocks_total = 0;
  for (int b = 1; b <= cfg.depth; ++b) {
    const std::int64_t tokens = n_t * spatial;
    const std::int64_t macs = block_macs(tokens, d);
    rep.per_block.push_back({b, tokens, macs});
    blocks_total += macs;
    if (next < plan.size() && plan[next].block == b) {
      spatial -= plan[next].drop;
      ++next;
    }
  }
  rep.total_macs = rep.embed_macs + rep.head_macs + blocks_total;
  rep.baseline_total_macs = rep.embed_macs + rep.head_macs +
                            cfg.depth * block_macs(n_t * n_s, d);
  rep.reduction_fraction =
      1.0 - static_cast<double>(rep.total_macs) /
                static_cast<double>(rep.baseline_total_macs);
  return rep;
}

std::vector<double> fd_abs_gradient(
    const BasicMatrix<double>& x,
    const std::function<double(const BasicMatrix<double>&)>& loss, double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  std::vector<double> out(x.rows, 0.0);
  BasicMatrix<double> probe = x;
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      const double orig = probe(i, c);
      probe(i, c) = orig + h;
      const double up = loss(probe);
      probe(i, c) = orig - h;
      const double down = loss(probe);
      probe(i, c) = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("non-finite loss during finite differencing");
      }
      out[i] += std::fabs((up - down) / (2.0 * h));
    }
  }
  return out;
}

GradHeatmap gradnorm_fd(const Video& video, const ModelConfig& cfg,
                        const Weights& weights, int label, double h,
                        LossKind loss) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  if (label < 0 || label >= cfg.classes) {
    throw ConfigError("label " + std::to_string(label) + " outside [0, " +
                      std::to_string(cfg.classes) + ")");
  }
  TokenTensor x0 = tube_embed(video, cfg, weights);
  add_positional(x0, weights);

  std::vector<BasicBlockWeights<double>> blocks;
  for (const BlockWeights& bw : weights.blocks)
    blocks.push_back(bw.cast<double>());
  const BasicMatrix<double> head = weights.head.cast<double>();
  const std::vector<double> head_bias(weights.head_bias.begin(),
                                      weights.head_bias.end());

  std::vector<BasicMatrix<double>> taps;
  BasicMatrix<double> cur = x0.to_matrix().cast<double>();
  for (const auto& bw : blocks) {
    taps.push_back(cur);
    cur = block_forward(cur, bw, cfg.heads);
  }
  if (blocks.empty()) taps.push_back(cur);

  GradHeatmap heat;
  heat.frames = x0.frames;
  heat.spatial = x0.spatial;
  heat.step_size = h;
  heat.values.assign(x0.tokens(), 0.0);
  for (std::size_t l = 0; l < taps.size(); ++l) {
    auto tail = [&](const BasicMatrix<double>& in) {
      BasicMatrix<double> y = in;
      for (std::size_t b = l; b < blocks.size(); ++b)
        y = block_forward(y, blocks[b], cfg.heads);
      return loss_from_logits(classify_matrix(y, head, head_bias), label, loss);
    };
    const std::vector<double> g = fd_abs_gradient(taps[l], tail, h);
    for (std::size_t i = 0; i < g.size(); ++i) heat.values[i] += g[i];
  }
  return heat;
}

RetentionStats retention_stats(const SelectionTrace& trace,
                               const std::vector<std::vector<float>>& f_sem) {
  if (f_sem.size() != trace.kept_indices.size()) {
    throw ShapeError("retention_stats: frame count mismatch");
  }
  RetentionStats stats;
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t t = 0; t < f_sem.size(); ++t) {
    const auto& sem = f_sem[t];
    const std::size_t top = std::max<std::size_t>(1, (sem.size() + 9) / 10);
    if (sem.empty()) {
      stats.per_frame_overlap.push_back(1.0);
      continue;
    }
    std::vector<std::size_t> order(sem.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sem[a] > sem[b]; });
    const auto& kept = trace.kept_indices[t];
    std::size_t frame_hits = 0;
    for (std::size_t k = 0; k < top; ++k) {
      if (std::binary_search(kept.begin(), kept.end(), order[k])) ++frame_hits;
    }
    stats.per_frame_overlap.push_back(static_cast<double>(frame_hits) /
                                      static_cast<double>(top));
    hits += frame_hits;
    total += top;
  }
  stats.top_decile_retention =
      total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
  return stats;
}

}  // namespace sta
