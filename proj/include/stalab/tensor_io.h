// SPDX-License-Identifier: Apache-2.0
//
// STTN tensor files:
//   bytes 0-3   'S' 'T' 'T' 'N'
//   byte  4     version (1)
//   byte  5     dtype (1 = float32 little-endian)
//   byte  6     rank
//   rank x u32  dims, little-endian
//   payload     prod(dims) float32 values, row-major, little-endian
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "stalab/tokens.h"
#include "stalab/vitcore.h"

namespace sta {

inline constexpr std::uint8_t kSttnVersion = 1;
inline constexpr std::uint8_t kSttnFloat32 = 1;

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t numel() const;
  bool operator==(const Tensor&) const = default;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
// Throws FormatError naming the offending field.
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view text);

Tensor to_tensor(const Video& v);        // T x H x W x 3
Tensor to_tensor(const TokenTensor& x);  // n_t x n_s x d
Video video_from_tensor(const Tensor& t);
TokenTensor tokens_from_tensor(const Tensor& t);

}  // namespace sta
