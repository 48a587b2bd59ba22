// SPDX-License-Identifier: Apache-2.0
#include "stalab/tensor_io.h"

#include <bit>
#include <fstream>
#include <iterator>
#include <string>
#include <system_error>

#include "stalab/error.h"

#include <unistd.h>

namespace sta {
namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'T', 'T', 'N'};
constexpr std::size_t kFixedHeader = 7;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.dims.size() > 255) throw FormatError("rank", "rank exceeds 255");
  if (t.data.size() != t.numel()) {
    throw ShapeError("tensor data length " + std::to_string(t.data.size()) +
                     " does not match dims");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kSttnVersion);
  out.push_back(kSttnFloat32);
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (std::uint32_t d : t.dims) put_u32(out, d);
  out.reserve(out.size() + 4 * t.data.size());
  for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> b) {
  if (b.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), b.begin())) {
    throw FormatError("magic", "not an STTN file");
  }
  if (b.size() < 5) throw FormatError("version", "truncated header");
  if (b[4] != kSttnVersion) {
    throw FormatError("version", "unsupported version " + std::to_string(b[4]));
  }
  if (b.size() < 6) throw FormatError("dtype", "truncated header");
  if (b[5] != kSttnFloat32) {
    throw FormatError("dtype", "unsupported dtype " + std::to_string(b[5]));
  }
  if (b.size() < kFixedHeader) throw FormatError("rank", "truncated header");
  const std::size_t rank = b[6];
  const std::size_t header = kFixedHeader + 4 * rank;
  if (b.size() < header) {
    throw FormatError("dims", "header declares rank " + std::to_string(rank) +
                                  " but ends after " + std::to_string(b.size()) +
                                  " bytes");
  }
  Tensor t;
  for (std::size_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(b, kFixedHeader + 4 * i));
  const std::size_t count = t.numel();
  const std::size_t payload = b.size() - header;
  if (payload < 4 * count) {
    throw FormatError("payload", "expected " + std::to_string(count) +
                                     " floats, found " +
                                     std::to_string(payload / 4));
  }
  if (payload > 4 * count) {
    throw FormatError("payload", std::to_string(payload - 4 * count) +
                                     " trailing bytes");
  }
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    t.data[i] = std::bit_cast<float>(get_u32(b, header + 4 * i));
  return t;
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()),
                              text.size()));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_file_atomic(path, encode_tensor(t));
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

Tensor to_tensor(const Video& v) {
  return {{static_cast<std::uint32_t>(v.frames),
           static_cast<std::uint32_t>(v.height),
           static_cast<std::uint32_t>(v.width), 3u},
          v.data};
}

Tensor to_tensor(const TokenTensor& x) {
  return {{static_cast<std::uint32_t>(x.frames),
           static_cast<std::uint32_t>(x.spatial),
           static_cast<std::uint32_t>(x.channels)},
          x.data};
}

Video video_from_tensor(const Tensor& t) {
  if (t.dims.size() != 4 || t.dims[3] != 3) {
    throw ShapeError("video tensor must be T x H x W x 3");
  }
  Video v;
  v.frames = static_cast<int>(t.dims[0]);
  v.height = static_cast<int>(t.dims[1]);
  v.width = static_cast<int>(t.dims[2]);
  v.data = t.data;
  return v;
}

TokenTensor tokens_from_tensor(const Tensor& t) {
  if (t.dims.size() != 3) throw ShapeError("token tensor must be rank 3");
  return TokenTensor(t.dims[0], t.dims[1], t.dims[2], t.data);
}

}  // namespace sta
