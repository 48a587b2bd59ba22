// SPDX-License-Identifier: Apache-2.0
//
// A columnar video ViT: tube embedding, a learned positional table, pre-norm
// joint space-time attention blocks and a mean-pooled linear head. STA stages
// run between blocks.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stalab/numkernel.h"
#include "stalab/stapune.h"
#include "stalab/tokens.h"

namespace sta {

struct ModelConfig {
  int frames = 8;
  int height = 64;
  int width = 64;
  int tube_frames = 2;
  int tube_height = 8;
  int tube_width = 8;
  int depth = 6;
  int dim = 64;
  int heads = 4;
  int classes = 10;

  // Throws ConfigError on non-divisible geometry or non-positive sizes.
  void validate() const;

  int frame_tokens() const { return frames / tube_frames; }
  int spatial_tokens() const {
    return (height / tube_height) * (width / tube_width);
  }
  int tokens() const { return frame_tokens() * spatial_tokens(); }
  int tube_volume() const { return tube_frames * tube_height * tube_width * 3; }
  int head_dim() const { return dim / heads; }
  int grid_rows() const { return height / tube_height; }
  int grid_cols() const { return width / tube_width; }

  bool operator==(const ModelConfig&) const = default;
};

// Pixels in T x H x W x 3 order.
struct Video {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Video() = default;
  Video(int t, int h, int w, float fill = 0.0f)
      : frames(t), height(h), width(w),
        data(static_cast<std::size_t>(t) * h * w * 3, fill) {}

  float& at(int t, int y, int x, int c) {
    return data[((static_cast<std::size_t>(t) * height + y) * width + x) * 3 +
                c];
  }
  float at(int t, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(t) * height + y) * width + x) * 3 +
                c];
  }
  bool operator==(const Video&) const = default;
};

template <typename T>
struct BasicBlockWeights {
  BasicMatrix<T> wq, wk, wv, wo;  // d x d
  std::vector<T> bq, bk, bv, bo;
  BasicMatrix<T> w1;  // d x 4d
  std::vector<T> b1;
  BasicMatrix<T> w2;  // 4d x d
  std::vector<T> b2;
  std::vector<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  template <typename U>
  BasicBlockWeights<U> cast() const {
    auto cv = [](const std::vector<T>& v) {
      return std::vector<U>(v.begin(), v.end());
    };
    BasicBlockWeights<U> o;
    o.wq = wq.template cast<U>();
    o.wk = wk.template cast<U>();
    o.wv = wv.template cast<U>();
    o.wo = wo.template cast<U>();
    o.bq = cv(bq);
    o.bk = cv(bk);
    o.bv = cv(bv);
    o.bo = cv(bo);
    o.w1 = w1.template cast<U>();
    o.b1 = cv(b1);
    o.w2 = w2.template cast<U>();
    o.b2 = cv(b2);
    o.ln1_gamma = cv(ln1_gamma);
    o.ln1_beta = cv(ln1_beta);
    o.ln2_gamma = cv(ln2_gamma);
    o.ln2_beta = cv(ln2_beta);
    return o;
  }

  bool operator==(const BasicBlockWeights&) const = default;
};

using BlockWeights = BasicBlockWeights<float>;

struct Weights {
  Matrix embed;  // tube_volume x d
  std::vector<float> embed_bias;
  Matrix pos;  // n x d
  std::vector<BlockWeights> blocks;
  Matrix head;  // d x classes
  std::vector<float> head_bias;

  bool operator==(const Weights&) const = default;
};

// Gaussian(0, 0.02^2) matrices from a counter PRNG keyed by (seed, parameter
// path); zero biases; unit layer-norm gains.
Weights init_weights(const ModelConfig& cfg, std::uint64_t seed);

TokenTensor tube_embed(const Video& video, const ModelConfig& cfg,
                       const Weights& weights);

// Adds the positional table row of each token (tensor must be unpruned).
void add_positional(TokenTensor& x, const Weights& weights);

namespace detail {

template <typename T>
BasicMatrix<T> project(const BasicMatrix<T>& x, const BasicMatrix<T>& w,
                       const std::vector<T>& b) {
  BasicMatrix<T> out = matmul(x, w);
  add_row_bias<T>(out, b);
  return out;
}

template <typename T>
BasicMatrix<T> ffn(const BasicMatrix<T>& h, const BasicBlockWeights<T>& bw) {
  return project(gelu(project(h, bw.w1, bw.b1)), bw.w2, bw.b2);
}

}  // namespace detail

/// Pre-norm block over all tokens jointly: x + MHSA(LN(x)), then + FFN(LN(.)).
/// Per-head logits are scaled by 1/sqrt(d/heads). When `attention` is non-null
/// it receives one n x n row-stochastic matrix per head.
template <typename T>
BasicMatrix<T> block_forward(const BasicMatrix<T>& x,
                             const BasicBlockWeights<T>& bw, int heads,
                             std::vector<BasicMatrix<T>>* attention = nullptr) {
  const std::size_t n = x.rows;
  const std::size_t d = x.cols;
  if (heads <= 0 || d % static_cast<std::size_t>(heads) != 0) {
    throw ShapeError("block_forward: width " + std::to_string(d) +
                     " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t hd = d / static_cast<std::size_t>(heads);
  const BasicMatrix<T> h = layer_norm<T>(x, bw.ln1_gamma, bw.ln1_beta);
  const BasicMatrix<T> q = detail::project(h, bw.wq, bw.bq);
  const BasicMatrix<T> k = detail::project(h, bw.wk, bw.bk);
  const BasicMatrix<T> v = detail::project(h, bw.wv, bw.bv);
  const T scale = T{1} / std::sqrt(static_cast<T>(hd));

  BasicMatrix<T> mixed(n, d);
  if (attention) attention->clear();
  for (std::size_t head = 0; head < static_cast<std::size_t>(heads); ++head) {
    const std::size_t off = head * hd;
    BasicMatrix<T> logits(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T acc{0};
        for (std::size_t c = 0; c < hd; ++c) acc += q(i, off + c) * k(j, off + c);
        logits(i, j) = acc * scale;
      }
    }
    const BasicMatrix<T> probs = softmax_axis(logits, Axis::kRows);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < hd; ++c) {
        T acc{0};
        for (std::size_t j = 0; j < n; ++j) acc += probs(i, j) * v(j, off + c);
        mixed(i, off + c) = acc;
      }
    }
    if (attention) attention->push_back(probs);
  }

  BasicMatrix<T> out = detail::project(mixed, bw.wo, bw.bo);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += x.data[i];
  const BasicMatrix<T> f =
      detail::ffn(layer_norm<T>(out, bw.ln2_gamma, bw.ln2_beta), bw);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += f.data[i];
  return out;
}

TokenTensor transformer_block(const TokenTensor& x, const BlockWeights& bw,
                              int heads);

// Mean over tokens, then head affine map.
template <typename T>
std::vector<T> classify_matrix(const BasicMatrix<T>& x,
                               const BasicMatrix<T>& head,
                               const std::vector<T>& bias) {
  if (x.rows == 0) throw DomainError("classify: no tokens");
  if (head.rows != x.cols) throw ShapeError("classify: head width mismatch");
  std::vector<T> pooled(x.cols, T{0});
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t c = 0; c < x.cols; ++c) pooled[c] += x(i, c);
  for (T& p : pooled) p /= static_cast<T>(x.rows);
  std::vector<T> logits(bias.begin(), bias.end());
  for (std::size_t j = 0; j < head.cols; ++j) {
    T acc{0};
    for (std::size_t c = 0; c < x.cols; ++c) acc += pooled[c] * head(c, j);
    logits[j] += acc;
  }
  return logits;
}

std::vector<float> classify(const TokenTensor& x, const Weights& weights);

// Similarity-head features of `x` computed with block `bw`'s projections:
// Q/K/V use LN1 + the attention projection, FFN uses LN2 + the MLP.
Matrix similarity_features(const TokenTensor& x, const BlockWeights& bw,
                           SimilarityHead head);

struct PruneTrace {
  std::vector<SelectionTrace> stages;
  // Tokens processed by each block, index 0 = block 1.
  std::vector<int> block_token_counts;
  std::vector<float> logits;
};

struct ForwardOptions {
  // Block (1-based) whose output, after any pruning stage at that block, is
  // returned in ForwardResult::tokens. 0 selects the last block.
  int capture_block = 0;
  const StaProbe* probe = nullptr;
};

struct ForwardResult {
  PruneTrace trace;
  TokenTensor tokens;
  const std::vector<float>& logits() const { return trace.logits; }
};

/// Full clip forward. The STA plan is validated before any compute.
ForwardResult forward(const Video& video, const ModelConfig& cfg,
                      const Weights& weights,
                      const std::optional<StaConfig>& sta,
                      const ForwardOptions& options = {});

// Positions (in the original n_s grid) surviving after each stage, per frame.
std::vector<std::vector<std::vector<std::size_t>>> surviving_positions(
    const PruneTrace& trace, std::size_t spatial);

}  // namespace sta
