// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace sta {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stateless counter-based generator. A stream is keyed by (seed, path) and
/// every draw is a pure function of (key, counter), so results do not depend
/// on call order, threading or the standard library's distributions.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view path)
      : key_(splitmix64(seed ^ splitmix64(fnv1a64(path)))) {}

  CounterRng substream(std::uint64_t index) const {
    CounterRng r = *this;
    r.key_ = splitmix64(key_ ^ splitmix64(index + 0x632be59bd9b4e019ULL));
    return r;
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return splitmix64(key_ ^ splitmix64(counter));
  }

  // Uniform in (0, 1].
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 1.0) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }

  // Standard normal via Box-Muller on counters (2c, 2c+1).
  double normal(std::uint64_t counter) const {
    double u1 = uniform(2 * counter);
    double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

}  // namespace sta
