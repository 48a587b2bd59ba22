// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stalab/numkernel.h"

namespace sta {

/// Embeddings laid out frame-major, then spatial token, then channel. Every
/// frame carries the same number of spatial tokens.
struct TokenTensor {
  std::size_t frames = 0;
  std::size_t spatial = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  TokenTensor() = default;
  TokenTensor(std::size_t n_t, std::size_t n_s, std::size_t d, float fill = 0)
      : frames(n_t), spatial(n_s), channels(d), data(n_t * n_s * d, fill) {}
  TokenTensor(std::size_t n_t, std::size_t n_s, std::size_t d,
              std::vector<float> values);

  std::size_t tokens() const { return frames * spatial; }

  float& at(std::size_t t, std::size_t s, std::size_t c) {
    return data[(t * spatial + s) * channels + c];
  }
  float at(std::size_t t, std::size_t s, std::size_t c) const {
    return data[(t * spatial + s) * channels + c];
  }
  std::span<const float> token(std::size_t t, std::size_t s) const {
    return {data.data() + (t * spatial + s) * channels, channels};
  }
  std::span<float> token(std::size_t t, std::size_t s) {
    return {data.data() + (t * spatial + s) * channels, channels};
  }

  // (frames * spatial) x channels view as an owned matrix.
  Matrix to_matrix() const { return Matrix(tokens(), channels, data); }
  static TokenTensor from_matrix(const Matrix& m, std::size_t n_t,
                                 std::size_t n_s);

  // Frame order reversed.
  TokenTensor reversed() const;

  // Keeps kept[t] (indices into frame t) for every frame, preserving order.
  // All kept lists must have the same length.
  TokenTensor select(const std::vector<std::vector<std::size_t>>& kept) const;

  bool operator==(const TokenTensor&) const = default;
};

}  // namespace sta
