// SPDX-License-Identifier: Apache-2.0
#include "stalab/tokens.h"

#include <algorithm>
#include <string>

namespace sta {

TokenTensor::TokenTensor(std::size_t n_t, std::size_t n_s, std::size_t d,
                         std::vector<float> values)
    : frames(n_t), spatial(n_s), channels(d), data(std::move(values)) {
  if (data.size() != n_t * n_s * d) {
    throw ShapeError("token tensor data length " +
                     std::to_string(data.size()) + " != " +
                     std::to_string(n_t) + "x" + std::to_string(n_s) + "x" +
                     std::to_string(d));
  }
}

TokenTensor TokenTensor::from_matrix(const Matrix& m, std::size_t n_t,
                                     std::size_t n_s) {
  if (m.rows != n_t * n_s) {
    throw ShapeError("from_matrix: " + std::to_string(m.rows) +
                     " rows cannot hold " + std::to_string(n_t) + "x" +
                     std::to_string(n_s) + " tokens");
  }
  return TokenTensor(n_t, n_s, m.cols, m.data);
}

TokenTensor TokenTensor::reversed() const {
  TokenTensor out(frames, spatial, channels);
  const std::size_t frame_len = spatial * channels;
  for (std::size_t t = 0; t < frames; ++t) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(t * frame_len),
                frame_len,
                out.data.begin() +
                    static_cast<std::ptrdiff_t>((frames - 1 - t) * frame_len));
  }
  return out;
}

TokenTensor TokenTensor::select(
    const std::vector<std::vector<std::size_t>>& kept) const {
  if (kept.size() != frames) {
    throw ShapeError("select: expected " + std::to_string(frames) +
                     " frame index lists, got " + std::to_string(kept.size()));
  }
  const std::size_t keep = frames == 0 ? 0 : kept.front().size();
  TokenTensor out(frames, keep, channels);
  for (std::size_t t = 0; t < frames; ++t) {
    if (kept[t].size() != keep) {
      throw ShapeError("select: frames keep different token counts");
    }
    for (std::size_t j = 0; j < keep; ++j) {
      const std::size_t s = kept[t][j];
      if (s >= spatial) throw ShapeError("select: index out of range");
      auto src = token(t, s);
      std::copy(src.begin(), src.end(), out.token(t, j).begin());
    }
  }
  return out;
}

}  // namespace sta
