// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "stalab/vitcore.h"

namespace sta {

enum class Background {
  kStaticTiles,  // flat-colored tiles; non-redundant pixels flicker per frame
  kSlowDrift,    // smooth pattern; non-redundant pixels follow a 1 px/frame drift
};

struct Foreground {
  int block_size = 16;
  int velocity_x = 2;  // px per frame, reflecting at the borders
  int velocity_y = 1;
  float intensity = 1.0f;
  int x0 = 0;
  int y0 = 0;
  bool operator==(const Foreground&) const = default;
};

// Background values lie in [0, 0.5]; keep the foreground intensity outside
// that range for a visible block.
struct SyntheticSpec {
  int frames = 8;
  int height = 64;
  int width = 64;
  Background background = Background::kStaticTiles;
  int tile_size = 8;
  Foreground foreground;
  double noise_sigma = 0.0;
  // Fraction of background pixels held at their frame-0 value.
  double redundancy = 1.0;
  // Every output value becomes (raw - pixel_mean) / pixel_std, the usual
  // input normalization of video models. The defaults leave values raw.
  double pixel_mean = 0.0;
  double pixel_std = 1.0;

  void validate() const;
  bool operator==(const SyntheticSpec&) const = default;
};

// Top-left corner of the foreground block in frame t.
std::pair<int, int> foreground_origin(const SyntheticSpec& spec, int t);

Video gen_synthetic_video(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace sta
