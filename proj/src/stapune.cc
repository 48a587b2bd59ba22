// SPDX-License-Identifier: Apache-2.0
#include "stalab/stapune.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "stalab/error.h"
#include "stalab/rng.h"

namespace sta {
namespace {

Matrix frame_rows(const Matrix& features, std::size_t frame,
                  std::size_t spatial) {
  Matrix out(spatial, features.cols);
  std::copy_n(features.data.begin() +
                  static_cast<std::ptrdiff_t>(frame * spatial * features.cols),
              spatial * features.cols, out.data.begin());
  return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix reverse_frames(const Matrix& features, std::size_t frames,
                      std::size_t spatial) {
  Matrix out(features.rows, features.cols);
  const std::size_t len = spatial * features.cols;
  for (std::size_t t = 0; t < frames; ++t) {
    std::copy_n(features.data.begin() + static_cast<std::ptrdiff_t>(t * len),
                len,
                out.data.begin() +
                    static_cast<std::ptrdiff_t>((frames - 1 - t) * len));
  }
  return out;
}

float dot(std::span<const float> a, std::span<const float> b) {
  float acc = 0.0f;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

// Cosine similarity; a zero-norm operand has similarity 0 to everything.
float cosine(std::span<const float> a, std::span<const float> b) {
  const float na = std::sqrt(dot(a, a));
  const float nb = std::sqrt(dot(b, b));
  if (na == 0.0f || nb == 0.0f) return 0.0f;
  return dot(a, b) / (na * nb);
}

// First `count` entries of a partial Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> sample_without_replacement(const CounterRng& rng,
                                                    std::size_t n,
                                                    std::size_t count) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(i, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

std::vector<std::size_t> complement_sorted(std::size_t n,
                                           const std::vector<std::size_t>& drop) {
  std::vector<bool> dropped(n, false);
  for (std::size_t i : drop) dropped[i] = true;
  std::vector<std::size_t> kept;
  kept.reserve(n - drop.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!dropped[i]) kept.push_back(i);
  return kept;
}

void check_drop(int r, std::size_t spatial) {
  if (r < 0 || static_cast<std::size_t>(r) >= spatial) {
    throw ConfigError("drop count " + std::to_string(r) +
                      " outside [0, " + std::to_string(spatial) + ")");
  }
}

}  // namespace

std::uint64_t stage_seed(std::uint64_t seed, int stage) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stage) + 1));
}

std::vector<int> make_schedule(int r1, Schedule kind, int n_stages) {
  if (r1 < 0) throw ConfigError("r1 must be non-negative");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::max(n_stages, 0)));
  for (int k = 0; k < n_stages; ++k) {
    switch (kind) {
      case Schedule::kDecreasing: out.push_back(r1 >> k); break;
      case Schedule::kConstant: out.push_back(r1); break;
      case Schedule::kIncreasing: out.push_back(r1 << k); break;
    }
  }
  return out;
}

std::vector<Order> make_order_plan(int n_stages, OrderPattern pattern) {
  if (n_stages < 1) throw ConfigError("order plan needs at least one stage");
  std::vector<Order> out;
  for (int k = 0; k < n_stages; ++k) {
    const bool even = k % 2 == 0;
    switch (pattern) {
      case OrderPattern::kFBF:
        out.push_back(even ? Order::kForward : Order::kBackward);
        break;
      case OrderPattern::kBFB:
        out.push_back(even ? Order::kBackward : Order::kForward);
        break;
      case OrderPattern::kAllForward: out.push_back(Order::kForward); break;
      case OrderPattern::kAllBackward: out.push_back(Order::kBackward); break;
    }
  }
  return out;
}

std::vector<int> default_insertion_blocks(int depth) {
  if (depth < 1) return {};
  std::vector<int> blocks = {1, 1 + depth / 3, 1 + (2 * depth) / 3};
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  return blocks;
}

std::vector<StagePlan> resolve_plan(const StaConfig& cfg, int depth,
                                    int spatial) {
  const std::vector<int> blocks = cfg.insertion_blocks.empty()
                                      ? default_insertion_blocks(depth)
                                      : cfg.insertion_blocks;
  const int n = static_cast<int>(blocks.size());
  if (n == 0) return {};
  const std::vector<int> drops =
      cfg.drops.empty() ? make_schedule(cfg.r1, cfg.schedule, n) : cfg.drops;
  const std::vector<Order> orders =
      cfg.orders.empty() ? make_order_plan(n, OrderPattern::kFBF) : cfg.orders;
  if (static_cast<int>(drops.size()) != n ||
      static_cast<int>(orders.size()) != n) {
    throw ConfigError("insertion blocks, drops and orders must have equal "
                      "length (" + std::to_string(n) + ")");
  }
  std::vector<StagePlan> plan;
  int remaining = spatial;
  int prev_block = 0;
  for (int k = 0; k < n; ++k) {
    if (blocks[k] < 1 || blocks[k] > depth) {
      throw ConfigError("insertion block " + std::to_string(blocks[k]) +
                        " outside [1, " + std::to_string(depth) + "]");
    }
    if (blocks[k] <= prev_block) {
      throw ConfigError("insertion blocks must be strictly increasing");
    }
    if (drops[k] < 0) throw ConfigError("negative drop count");
    if (drops[k] >= remaining) {
      throw ConfigError("stage " + std::to_string(k + 1) + " drops " +
                        std::to_string(drops[k]) + " of " +
                        std::to_string(remaining) + " remaining tokens");
    }
    if (cfg.method == PruneMethod::kSta &&
        cfg.first_frame == FirstFrameMethod::kBipartite &&
        drops[k] > remaining / 2) {
      throw ConfigError("bipartite first-frame pruning can drop at most " +
                        std::to_string(remaining / 2) + " tokens at stage " +
                        std::to_string(k + 1));
    }
    plan.push_back({blocks[k], drops[k], orders[k]});
    remaining -= drops[k];
    prev_block = blocks[k];
  }
  return plan;
}

std::vector<std::vector<float>> semantic_scores(const TokenTensor& x,
                                                SemanticScope scope) {
  std::vector<float> raw(x.tokens());
  for (std::size_t t = 0; t < x.frames; ++t) {
    for (std::size_t s = 0; s < x.spatial; ++s) {
      float acc = 0.0f;
      for (float v : x.token(t, s)) acc += std::fabs(v);
      raw[t * x.spatial + s] = acc;
    }
  }
  std::vector<std::vector<float>> out(x.frames);
  if (raw.empty()) return out;
  if (scope == SemanticScope::kGlobal) {
    const std::vector<float> norm = minmax_norm<float>(raw);
    for (std::size_t t = 0; t < x.frames; ++t) {
      out[t].assign(norm.begin() + static_cast<std::ptrdiff_t>(t * x.spatial),
                    norm.begin() +
                        static_cast<std::ptrdiff_t>((t + 1) * x.spatial));
    }
  } else {
    for (std::size_t t = 0; t < x.frames; ++t) {
      out[t] = minmax_norm(std::span<const float>(raw).subspan(
          t * x.spatial, x.spatial));
    }
  }
  return out;
}

std::vector<std::size_t> first_frame_prune(const Matrix& features, int r,
                                           FirstFrameMethod method,
                                           std::uint64_t seed,
                                           std::vector<float>* drop_scores,
                                           std::uint64_t* dot_counter) {
  const std::size_t n = features.rows;
  check_drop(r, n);
  const auto drop = static_cast<std::size_t>(r);
  std::vector<float> scores(n, 0.0f);
  std::vector<std::size_t> dropped;

  switch (method) {
    case FirstFrameMethod::kRandom: {
      CounterRng rng(seed, "first_frame/random");
      dropped = sample_without_replacement(rng, n, drop);
      break;
    }
    case FirstFrameMethod::kGrid: {
      CounterRng rng(seed, "first_frame/grid");
      for (std::size_t cell = 0; cell < drop; ++cell) {
        const std::size_t begin = cell * n / drop;
        const std::size_t end = (cell + 1) * n / drop;
        dropped.push_back(begin + rng.below(cell, end - begin));
      }
      break;
    }
    case FirstFrameMethod::kBipartite: {
      if (drop > n / 2) {
        throw ConfigError("bipartite pruning drops at most n_s/2 tokens");
      }
      std::vector<std::size_t> evens;
      for (std::size_t i = 0; i < n; i += 2) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 1; j < n; j += 2) {
          best = std::max(best, cosine(features.row(i), features.row(j)));
          if (dot_counter) ++*dot_counter;
        }
        scores[i] = n > 1 ? best : 0.0f;
        evens.push_back(i);
      }
      // Most similar first; on ties the higher index goes first so the lower
      // index survives.
      std::stable_sort(evens.begin(), evens.end(),
                       [&](std::size_t a, std::size_t b) {
                         if (scores[a] != scores[b]) return scores[a] > scores[b];
                         return a > b;
                       });
      dropped.assign(evens.begin(),
                     evens.begin() + static_cast<std::ptrdiff_t>(drop));
      break;
    }
  }

  if (method != FirstFrameMethod::kBipartite) {
    for (std::size_t i : dropped) scores[i] = 1.0f;
  }
  if (drop_scores) *drop_scores = std::move(scores);
  return complement_sorted(n, dropped);
}

Matrix transition_matrix(const Matrix& curr, const Matrix& prev_kept,
                         bool scaled, TransitionNorm norm,
                         std::uint64_t* dot_counter) {
  if (curr.cols != prev_kept.cols) {
    throw ShapeError("transition_matrix: feature widths " +
                     std::to_string(curr.cols) + " vs " +
                     std::to_string(prev_kept.cols));
  }
  Matrix logits(curr.rows, prev_kept.rows);
  const float scale =
      scaled ? 1.0f / std::sqrt(static_cast<float>(curr.cols)) : 1.0f;
  for (std::size_t i = 0; i < curr.rows; ++i) {
    for (std::size_t j = 0; j < prev_kept.rows; ++j) {
      logits(i, j) = dot(curr.row(i), prev_kept.row(j)) * scale;
    }
  }
  if (dot_counter) *dot_counter += curr.rows * prev_kept.rows;
  return softmax_axis(logits,
                      norm == TransitionNorm::kCurrent ? Axis::kCols
                                                       : Axis::kRows);
}

std::vector<float> accumulate_step(const Matrix& transition,
                                   std::span<const float> s_prev) {
  if (transition.cols != s_prev.size()) {
    throw ShapeError("accumulate_step: transition has " +
                     std::to_string(transition.cols) + " columns, score has " +
                     std::to_string(s_prev.size()) + " entries");
  }
  std::vector<float> out(transition.rows, 0.0f);
  for (std::size_t i = 0; i < transition.rows; ++i) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < transition.cols; ++j)
      acc += transition(i, j) * s_prev[j];
    out[i] = acc;
  }
  return out;
}

std::vector<float> combine_score(std::span<const float> a_raw,
                                 std::span<const float> f_sem) {
  if (a_raw.size() != f_sem.size()) {
    throw ShapeError("combine_score: length mismatch");
  }
  std::vector<float> out(a_raw.size());
  for (std::size_t i = 0; i < a_raw.size(); ++i)
    out[i] = (1.0f - f_sem[i]) * a_raw[i];
  return out;
}

std::vector<std::size_t> select_keep(std::span<const float> scores,
                                     std::size_t keep_count) {
  if (keep_count == 0 || keep_count > scores.size()) {
    throw ConfigError("select_keep: keep count " + std::to_string(keep_count) +
                      " outside [1, " + std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] < scores[b];
                   });
  order.resize(keep_count);
  std::sort(order.begin(), order.end());
  return order;
}

PruneResult prune_clip(const TokenTensor& x, int r, const StaConfig& cfg,
                       Order order, const Matrix& features, int stage,
                       const StaProbe* probe) {
  check_drop(r, x.spatial);
  if (features.rows != x.tokens()) {
    throw ShapeError("prune_clip: " + std::to_string(features.rows) +
                     " feature rows for " + std::to_string(x.tokens()) +
                     " tokens");
  }
  if (cfg.method == PruneMethod::kRandom) {
    PruneResult res = random_prune_clip(x, r, cfg.seed, stage);
    res.trace.order = order;
    return res;
  }

  const std::size_t n_t = x.frames;
  const std::size_t n_s = x.spatial;
  const std::size_t keep = n_s - static_cast<std::size_t>(r);
  const bool backward = order == Order::kBackward;

  SelectionTrace trace;
  trace.stage = stage;
  trace.drop = r;
  trace.order = order;
  trace.spatial_before = n_s;
  trace.kept_indices.resize(n_t);
  trace.scores.resize(n_t);

  const TokenTensor xs = backward ? x.reversed() : x;
  const Matrix feats = backward ? reverse_frames(features, n_t, n_s) : features;
  trace.semantic = semantic_scores(xs, cfg.semantic_scope);

  if (n_t > 0) {
    const Matrix first = frame_rows(feats, 0, n_s);
    trace.kept_indices[0] =
        first_frame_prune(first, r, cfg.first_frame, stage_seed(cfg.seed, stage),
                          &trace.scores[0], &trace.affinity_dots);
    std::vector<float> s_acc(keep, 1.0f / static_cast<float>(keep));
    Matrix prev = gather_rows(first, trace.kept_indices[0]);

    for (std::size_t t = 1; t < n_t; ++t) {
      if (probe && probe->on_accumulator) probe->on_accumulator(t, s_acc);
      const Matrix curr = frame_rows(feats, t, n_s);
      const Matrix transition =
          transition_matrix(curr, prev, cfg.scaled_softmax,
                            cfg.transition_norm, &trace.affinity_dots);
      if (probe && probe->on_transition) probe->on_transition(t, transition);
      const std::vector<float> a_raw = accumulate_step(transition, s_acc);

      std::vector<float> score;
      switch (cfg.score_mode) {
        case ScoreMode::kCombined:
          score = combine_score(a_raw, trace.semantic[t]);
          break;
        case ScoreMode::kTemporalOnly:
          score = a_raw;
          break;
        case ScoreMode::kSemanticOnly:
          score.resize(n_s);
          for (std::size_t s = 0; s < n_s; ++s)
            score[s] = 1.0f - trace.semantic[t][s];
          break;
      }
      std::vector<std::size_t> kept = select_keep(score, keep);

      float total = 0.0f;
      for (std::size_t j = 0; j < keep; ++j) {
        s_acc[j] = a_raw[kept[j]];
        total += s_acc[j];
      }
      if (total > 0.0f) {
        for (float& v : s_acc) v /= total;
      } else {
        std::fill(s_acc.begin(), s_acc.end(), 1.0f / static_cast<float>(keep));
      }
      prev = gather_rows(curr, kept);
      trace.scores[t] = std::move(score);
      trace.kept_indices[t] = std::move(kept);
    }
  }
  trace.affinity_macs = trace.affinity_dots * features.cols;

  if (backward) {
    std::reverse(trace.kept_indices.begin(), trace.kept_indices.end());
    std::reverse(trace.scores.begin(), trace.scores.end());
    std::reverse(trace.semantic.begin(), trace.semantic.end());
  }
  PruneResult res;
  res.tokens = x.select(trace.kept_indices);
  res.trace = std::move(trace);
  return res;
}

PruneResult random_prune_clip(const TokenTensor& x, int r, std::uint64_t seed,
                              int stage) {
  check_drop(r, x.spatial);
  SelectionTrace trace;
  trace.stage = stage;
  trace.drop = r;
  trace.spatial_before = x.spatial;
  trace.semantic = semantic_scores(x);
  const CounterRng rng =
      CounterRng(stage_seed(seed, stage), "random_prune");
  for (std::size_t t = 0; t < x.frames; ++t) {
    const auto dropped = sample_without_replacement(
        rng.substream(t), x.spatial, static_cast<std::size_t>(r));
    std::vector<float> scores(x.spatial, 0.0f);
    for (std::size_t i : dropped) scores[i] = 1.0f;
    trace.scores.push_back(std::move(scores));
    trace.kept_indices.push_back(complement_sorted(x.spatial, dropped));
  }
  PruneResult res;
  res.tokens = x.select(trace.kept_indices);
  res.trace = std::move(trace);
  return res;
}

std::string_view to_string(Schedule v) {
  switch (v) {
    case Schedule::kDecreasing: return "decreasing";
    case Schedule::kConstant: return "constant";
    case Schedule::kIncreasing: return "increasing";
  }
  return "?";
}

std::string_view to_string(Order v) {
  return v == Order::kForward ? "F" : "B";
}

std::string_view to_string(FirstFrameMethod v) {
  switch (v) {
    case FirstFrameMethod::kRandom: return "random";
    case FirstFrameMethod::kGrid: return "grid";
    case FirstFrameMethod::kBipartite: return "bipartite";
  }
  return "?";
}

std::string_view to_string(SimilarityHead v) {
  switch (v) {
    case SimilarityHead::kQuery: return "q";
    case SimilarityHead::kKey: return "k";
    case SimilarityHead::kValue: return "v";
    case SimilarityHead::kFfn: return "ffn";
  }
  return "?";
}

std::string_view to_string(ScoreMode v) {
  switch (v) {
    case ScoreMode::kCombined: return "combined";
    case ScoreMode::kTemporalOnly: return "temporal";
    case ScoreMode::kSemanticOnly: return "semantic";
  }
  return "?";
}

std::string_view to_string(PruneMethod v) {
  return v == PruneMethod::kSta ? "sta" : "random";
}

Schedule parse_schedule(std::string_view s) {
  if (s == "decreasing") return Schedule::kDecreasing;
  if (s == "constant") return Schedule::kConstant;
  if (s == "increasing") return Schedule::kIncreasing;
  throw ConfigError("unknown schedule '" + std::string(s) + "'");
}

OrderPattern parse_order_pattern(std::string_view s) {
  if (s == "fbf") return OrderPattern::kFBF;
  if (s == "bfb") return OrderPattern::kBFB;
  if (s == "fff") return OrderPattern::kAllForward;
  if (s == "bbb") return OrderPattern::kAllBackward;
  throw ConfigError("unknown order pattern '" + std::string(s) + "'");
}

FirstFrameMethod parse_first_frame(std::string_view s) {
  if (s == "random") return FirstFrameMethod::kRandom;
  if (s == "grid") return FirstFrameMethod::kGrid;
  if (s == "bipartite") return FirstFrameMethod::kBipartite;
  throw ConfigError("unknown first-frame method '" + std::string(s) + "'");
}

SimilarityHead parse_similarity_head(std::string_view s) {
  if (s == "q") return SimilarityHead::kQuery;
  if (s == "k") return SimilarityHead::kKey;
  if (s == "v") return SimilarityHead::kValue;
  if (s == "ffn") return SimilarityHead::kFfn;
  throw ConfigError("unknown similarity head '" + std::string(s) + "'");
}

ScoreMode parse_score_mode(std::string_view s) {
  if (s == "combined") return ScoreMode::kCombined;
  if (s == "temporal") return ScoreMode::kTemporalOnly;
  if (s == "semantic") return ScoreMode::kSemanticOnly;
  throw ConfigError("unknown score mode '" + std::string(s) + "'");
}

}  // namespace sta
