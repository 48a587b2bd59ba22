// SPDX-License-Identifier: Apache-2.0
#include "stalab/synthetic.h"

#include <cmath>
#include <numbers>

#include "stalab/error.h"
#include "stalab/rng.h"

namespace sta {
namespace {

int reflect(int p, int span) {
  if (span <= 0) return 0;
  const int period = 2 * span;
  const int m = ((p % period) + period) % period;
  return m <= span ? m : period - m;
}

float drift_value(int y, int x, int c, int t, int height, int width) {
  const double phase = 2.0 * std::numbers::pi * (x - t) / width +
                       std::numbers::pi * y / height + c;
  return static_cast<float>(0.25 + 0.25 * std::sin(phase));
}

}  // namespace

void SyntheticSpec::validate() const {
  if (frames <= 0 || height <= 0 || width <= 0) {
    throw ConfigError("synthetic video dims must be positive");
  }
  if (tile_size <= 0) throw ConfigError("tile size must be positive");
  if (foreground.block_size < 0 || foreground.block_size > height ||
      foreground.block_size > width) {
    throw ConfigError("foreground block does not fit the frame");
  }
  if (foreground.x0 < 0 || foreground.y0 < 0 ||
      foreground.x0 + foreground.block_size > width ||
      foreground.y0 + foreground.block_size > height) {
    throw ConfigError("foreground start position out of bounds");
  }
  if (!(pixel_std > 0.0)) throw ConfigError("pixel std must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (!(redundancy >= 0.0 && redundancy <= 1.0)) {
    throw ConfigError("redundancy must lie in [0, 1]");
  }
}

std::pair<int, int> foreground_origin(const SyntheticSpec& spec, int t) {
  const Foreground& f = spec.foreground;
  return {reflect(f.x0 + f.velocity_x * t, spec.width - f.block_size),
          reflect(f.y0 + f.velocity_y * t, spec.height - f.block_size)};
}

Video gen_synthetic_video(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const CounterRng tiles(seed, "synthetic/tiles");
  const CounterRng dynamic(seed, "synthetic/dynamic");
  const CounterRng flicker(seed, "synthetic/flicker");
  const CounterRng noise(seed, "synthetic/noise");
  const int tiles_x = (spec.width + spec.tile_size - 1) / spec.tile_size;

  Video v(spec.frames, spec.height, spec.width);
  for (int t = 0; t < spec.frames; ++t) {
    const auto [fx, fy] = foreground_origin(spec, t);
    const int b = spec.foreground.block_size;
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const auto pixel = static_cast<std::uint64_t>(y * spec.width + x);
        const bool moving = dynamic.uniform(pixel) > spec.redundancy;
        const bool in_block = x >= fx && x < fx + b && y >= fy && y < fy + b;
        for (int c = 0; c < 3; ++c) {
          float value;
          if (in_block) {
            value = spec.foreground.intensity;
          } else if (spec.background == Background::kStaticTiles) {
            if (moving) {
              const std::uint64_t k =
                  (static_cast<std::uint64_t>(t) * spec.height * spec.width +
                   pixel) * 3 + static_cast<std::uint64_t>(c);
              value = static_cast<float>(0.5 * flicker.uniform(k));
            } else {
              const auto tile = static_cast<std::uint64_t>(
                  (y / spec.tile_size) * tiles_x + x / spec.tile_size);
              value = static_cast<float>(0.5 * tiles.uniform(tile * 3 + c));
            }
          } else {
            value = drift_value(y, x, c, moving ? t : 0, spec.height,
                                spec.width);
          }
          if (spec.noise_sigma > 0.0) {
            const std::uint64_t k =
                (static_cast<std::uint64_t>(t) * spec.height * spec.width +
                 pixel) * 3 + static_cast<std::uint64_t>(c);
            value += static_cast<float>(spec.noise_sigma * noise.normal(k));
          }
          v.at(t, y, x, c) = static_cast<float>(
              (static_cast<double>(value) - spec.pixel_mean) / spec.pixel_std);
        }
      }
    }
  }
  return v;
}

}  // namespace sta
