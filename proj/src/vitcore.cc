// SPDX-License-Identifier: Apache-2.0
#include "stalab/vitcore.h"

#include <string>

#include "stalab/error.h"
#include "stalab/rng.h"

namespace sta {
namespace {

constexpr double kInitStd = 0.02;

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                       const std::string& path) {
  const CounterRng rng(seed, path);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    m.data[i] = static_cast<float>(kInitStd * rng.normal(i));
  return m;
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(frames, "frames");
  positive(height, "height");
  positive(width, "width");
  positive(tube_frames, "tube frames");
  positive(tube_height, "tube height");
  positive(tube_width, "tube width");
  positive(dim, "dim");
  positive(heads, "heads");
  positive(classes, "classes");
  if (depth < 0) throw ConfigError("depth must be non-negative");
  if (frames % tube_frames != 0 || height % tube_height != 0 ||
      width % tube_width != 0) {
    throw ConfigError("video dims must be divisible by the tube size");
  }
  if (dim % heads != 0) throw ConfigError("dim must be divisible by heads");
}

Weights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.dim);
  Weights w;
  w.embed = gaussian_matrix(static_cast<std::size_t>(cfg.tube_volume()), d,
                            seed, "embed.weight");
  w.embed_bias.assign(d, 0.0f);
  w.pos = gaussian_matrix(static_cast<std::size_t>(cfg.tokens()), d, seed,
                          "pos");
  for (int b = 0; b < cfg.depth; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    BlockWeights bw;
    bw.wq = gaussian_matrix(d, d, seed, p + "wq");
    bw.wk = gaussian_matrix(d, d, seed, p + "wk");
    bw.wv = gaussian_matrix(d, d, seed, p + "wv");
    bw.wo = gaussian_matrix(d, d, seed, p + "wo");
    bw.w1 = gaussian_matrix(d, 4 * d, seed, p + "w1");
    bw.w2 = gaussian_matrix(4 * d, d, seed, p + "w2");
    bw.bq.assign(d, 0.0f);
    bw.bk.assign(d, 0.0f);
    bw.bv.assign(d, 0.0f);
    bw.bo.assign(d, 0.0f);
    bw.b1.assign(4 * d, 0.0f);
    bw.b2.assign(d, 0.0f);
    bw.ln1_gamma.assign(d, 1.0f);
    bw.ln1_beta.assign(d, 0.0f);
    bw.ln2_gamma.assign(d, 1.0f);
    bw.ln2_beta.assign(d, 0.0f);
    w.blocks.push_back(std::move(bw));
  }
  w.head = gaussian_matrix(d, static_cast<std::size_t>(cfg.classes), seed,
                           "head.weight");
  w.head_bias.assign(static_cast<std::size_t>(cfg.classes), 0.0f);
  return w;
}

TokenTensor tube_embed(const Video& video, const ModelConfig& cfg,
                       const Weights& weights) {
  cfg.validate();
  if (video.frames != cfg.frames || video.height != cfg.height ||
      video.width != cfg.width ||
      video.data.size() != static_cast<std::size_t>(cfg.frames) * cfg.height *
                               cfg.width * 3) {
    throw ShapeError("tube_embed: video is " + std::to_string(video.frames) +
                     "x" + std::to_string(video.height) + "x" +
                     std::to_string(video.width) + ", model expects " +
                     std::to_string(cfg.frames) + "x" +
                     std::to_string(cfg.height) + "x" +
                     std::to_string(cfg.width));
  }
  const auto vol = static_cast<std::size_t>(cfg.tube_volume());
  if (weights.embed.rows != vol ||
      weights.embed.cols != static_cast<std::size_t>(cfg.dim)) {
    throw ShapeError("tube_embed: projection shape mismatch");
  }
  const int n_t = cfg.frame_tokens();
  const int rows = cfg.grid_rows();
  const int cols = cfg.grid_cols();
  Matrix tubes(static_cast<std::size_t>(cfg.tokens()), vol);
  for (int ft = 0; ft < n_t; ++ft) {
    for (int gy = 0; gy < rows; ++gy) {
      for (int gx = 0; gx < cols; ++gx) {
        const auto token =
            static_cast<std::size_t>((ft * rows + gy) * cols + gx);
        std::size_t k = 0;
        for (int dt = 0; dt < cfg.tube_frames; ++dt)
          for (int dy = 0; dy < cfg.tube_height; ++dy)
            for (int dx = 0; dx < cfg.tube_width; ++dx)
              for (int c = 0; c < 3; ++c)
                tubes(token, k++) =
                    video.at(ft * cfg.tube_frames + dt,
                             gy * cfg.tube_height + dy,
                             gx * cfg.tube_width + dx, c);
      }
    }
  }
  Matrix out = detail::project(tubes, weights.embed, weights.embed_bias);
  return TokenTensor::from_matrix(out, static_cast<std::size_t>(n_t),
                                  static_cast<std::size_t>(rows * cols));
}

void add_positional(TokenTensor& x, const Weights& weights) {
  if (weights.pos.rows != x.tokens() || weights.pos.cols != x.channels) {
    throw ShapeError("add_positional: table is " +
                     std::to_string(weights.pos.rows) + "x" +
                     std::to_string(weights.pos.cols));
  }
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += weights.pos.data[i];
}

TokenTensor transformer_block(const TokenTensor& x, const BlockWeights& bw,
                              int heads) {
  return TokenTensor::from_matrix(block_forward(x.to_matrix(), bw, heads),
                                  x.frames, x.spatial);
}

std::vector<float> classify(const TokenTensor& x, const Weights& weights) {
  if (x.tokens() == 0) throw DomainError("classify: no tokens");
  return classify_matrix(x.to_matrix(), weights.head, weights.head_bias);
}

Matrix similarity_features(const TokenTensor& x, const BlockWeights& bw,
                           SimilarityHead head) {
  const Matrix m = x.to_matrix();
  switch (head) {
    case SimilarityHead::kQuery:
      return detail::project(layer_norm<float>(m, bw.ln1_gamma, bw.ln1_beta),
                             bw.wq, bw.bq);
    case SimilarityHead::kKey:
      return detail::project(layer_norm<float>(m, bw.ln1_gamma, bw.ln1_beta),
                             bw.wk, bw.bk);
    case SimilarityHead::kValue:
      return detail::project(layer_norm<float>(m, bw.ln1_gamma, bw.ln1_beta),
                             bw.wv, bw.bv);
    case SimilarityHead::kFfn:
      return detail::ffn(layer_norm<float>(m, bw.ln2_gamma, bw.ln2_beta), bw);
  }
  throw ConfigError("unknown similarity head");
}

ForwardResult forward(const Video& video, const ModelConfig& cfg,
                      const Weights& weights,
                      const std::optional<StaConfig>& sta,
                      const ForwardOptions& options) {
  cfg.validate();
  if (weights.blocks.size() != static_cast<std::size_t>(cfg.depth)) {
    throw ShapeError("forward: weights have " +
                     std::to_string(weights.blocks.size()) + " blocks, model " +
                     std::to_string(cfg.depth));
  }
  if (options.capture_block < 0 || options.capture_block > cfg.depth) {
    throw ConfigError("capture block outside [0, depth]");
  }
  std::vector<StagePlan> plan;
  if (sta) plan = resolve_plan(*sta, cfg.depth, cfg.spatial_tokens());

  ForwardResult res;
  TokenTensor x = tube_embed(video, cfg, weights);
  add_positional(x, weights);

  std::size_t next_stage = 0;
  const int capture = options.capture_block == 0 ? cfg.depth
                                                 : options.capture_block;
  if (cfg.depth == 0) res.tokens = x;
  for (int b = 1; b <= cfg.depth; ++b) {
    const BlockWeights& bw = weights.blocks[static_cast<std::size_t>(b - 1)];
    res.trace.block_token_counts.push_back(static_cast<int>(x.tokens()));
    x = transformer_block(x, bw, cfg.heads);
    if (next_stage < plan.size() && plan[next_stage].block == b) {
      const StagePlan& st = plan[next_stage];
      const int stage = static_cast<int>(next_stage) + 1;
      PruneResult pr;
      if (sta->method == PruneMethod::kRandom) {
        pr = random_prune_clip(x, st.drop, sta->seed, stage);
        pr.trace.order = st.order;
      } else {
        const Matrix feats = similarity_features(x, bw, sta->similarity_head);
        pr = prune_clip(x, st.drop, *sta, st.order, feats, stage,
                        options.probe);
      }
      pr.trace.block = b;
      x = std::move(pr.tokens);
      res.trace.stages.push_back(std::move(pr.trace));
      ++next_stage;
    }
    if (b == capture) res.tokens = x;
  }
  res.trace.logits = classify(x, weights);
  return res;
}

std::vector<std::vector<std::vector<std::size_t>>> surviving_positions(
    const PruneTrace& trace, std::size_t spatial) {
  std::vector<std::vector<std::vector<std::size_t>>> out;
  std::vector<std::vector<std::size_t>> current;
  for (const SelectionTrace& st : trace.stages) {
    if (current.empty()) {
      current.assign(st.kept_indices.size(), {});
      for (auto& frame : current)
        for (std::size_t s = 0; s < spatial; ++s) frame.push_back(s);
    }
    if (st.kept_indices.size() != current.size()) {
      throw ShapeError("surviving_positions: frame count changed");
    }
    std::vector<std::vector<std::size_t>> next(current.size());
    for (std::size_t t = 0; t < current.size(); ++t) {
      for (std::size_t idx : st.kept_indices[t]) {
        if (idx >= current[t].size()) {
          throw ShapeError("surviving_positions: index out of range");
        }
        next[t].push_back(current[t][idx]);
      }
    }
    current = std::move(next);
    out.push_back(current);
  }
  return out;
}

}  // namespace sta
