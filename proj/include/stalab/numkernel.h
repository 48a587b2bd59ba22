// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major kernels. Everything is a pure function with a fixed
// summation order, so repeated calls are bitwise reproducible. The pipeline
// runs in float; the finite-difference probes instantiate the same kernels in
// double.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stalab/error.h"

namespace sta {

template <typename T>
struct BasicMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  BasicMatrix() = default;
  BasicMatrix(std::size_t r, std::size_t c, T fill = T{0})
      : rows(r), cols(c), data(r * c, fill) {}
  BasicMatrix(std::size_t r, std::size_t c, std::vector<T> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
      throw ShapeError("matrix data length " + std::to_string(data.size()) +
                       " != " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  template <typename U>
  BasicMatrix<U> cast() const {
    BasicMatrix<U> out(rows, cols);
    std::transform(data.begin(), data.end(), out.data.begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const BasicMatrix&) const = default;
};

using Matrix = BasicMatrix<float>;

enum class Axis {
  kRows,  // normalize each row
  kCols,  // normalize each column
};

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: " + std::to_string(a.rows) + "x" +
                     std::to_string(a.cols) + " times " +
                     std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
  BasicMatrix<T> out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      T acc{0};
      for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

// a * b^T without materializing the transpose.
template <typename T>
BasicMatrix<T> matmul_transposed(const BasicMatrix<T>& a,
                                 const BasicMatrix<T>& b) {
  if (a.cols != b.cols) {
    throw ShapeError("matmul_transposed: inner dims " +
                     std::to_string(a.cols) + " vs " + std::to_string(b.cols));
  }
  BasicMatrix<T> out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      T acc{0};
      for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  return out;
}

// Adds bias[j] to every row.
template <typename T>
void add_row_bias(BasicMatrix<T>& m, std::span<const T> bias) {
  if (bias.size() != m.cols) {
    throw ShapeError("bias length " + std::to_string(bias.size()) +
                     " != cols " + std::to_string(m.cols));
  }
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) += bias[j];
}

template <typename T>
BasicMatrix<T> softmax_axis(const BasicMatrix<T>& m, Axis axis) {
  BasicMatrix<T> out(m.rows, m.cols);
  const bool along_rows = axis == Axis::kRows;
  const std::size_t slices = along_rows ? m.rows : m.cols;
  const std::size_t len = along_rows ? m.cols : m.rows;
  auto at = [&](BasicMatrix<T>& x, std::size_t s, std::size_t k) -> T& {
    return along_rows ? x(s, k) : x(k, s);
  };
  auto cat = [&](std::size_t s, std::size_t k) {
    return along_rows ? m(s, k) : m(k, s);
  };
  for (std::size_t s = 0; s < slices; ++s) {
    if (len == 0) continue;
    T peak = cat(s, 0);
    for (std::size_t k = 1; k < len; ++k) peak = std::max(peak, cat(s, k));
    T total{0};
    for (std::size_t k = 0; k < len; ++k) {
      T e = std::exp(cat(s, k) - peak);
      at(out, s, k) = e;
      total += e;
    }
    for (std::size_t k = 0; k < len; ++k) at(out, s, k) /= total;
  }
  return out;
}

// (v - min) / (max - min); a constant input maps to all zeros.
template <typename T>
std::vector<T> minmax_norm(std::span<const T> v) {
  if (v.empty()) throw DomainError("minmax_norm: empty input");
  auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const T lo = *lo_it;
  const T range = *hi_it - lo;
  std::vector<T> out(v.size(), T{0});
  if (range > T{0}) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / range;
  }
  return out;
}

template <typename T>
std::vector<T> minmax_norm(const std::vector<T>& v) {
  return minmax_norm(std::span<const T>(v));
}

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
BasicMatrix<T> layer_norm(const BasicMatrix<T>& x, std::span<const T> gamma,
                          std::span<const T> beta) {
  if (gamma.size() != x.cols || beta.size() != x.cols) {
    throw ShapeError("layer_norm: gamma/beta length must equal " +
                     std::to_string(x.cols));
  }
  BasicMatrix<T> out(x.rows, x.cols);
  const T n = static_cast<T>(x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    T mean{0};
    for (std::size_t j = 0; j < x.cols; ++j) mean += x(i, j);
    mean /= n;
    T var{0};
    for (std::size_t j = 0; j < x.cols; ++j) {
      T c = x(i, j) - mean;
      var += c * c;
    }
    var /= n;
    const T inv = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
    for (std::size_t j = 0; j < x.cols; ++j)
      out(i, j) = (x(i, j) - mean) * inv * gamma[j] + beta[j];
  }
  return out;
}

// tanh approximation.
template <typename T>
T gelu_scalar(T v) {
  constexpr T kSqrt2OverPi = static_cast<T>(0.7978845608028654);
  constexpr T kCubic = static_cast<T>(0.044715);
  return static_cast<T>(0.5) * v *
         (T{1} + std::tanh(kSqrt2OverPi * (v + kCubic * v * v * v)));
}

template <typename T>
BasicMatrix<T> gelu(const BasicMatrix<T>& x) {
  BasicMatrix<T> out = x;
  for (T& v : out.data) v = gelu_scalar(v);
  return out;
}

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(),
                     [](T x) { return std::isfinite(x); });
}

}  // namespace sta
