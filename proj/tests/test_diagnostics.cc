// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stalab/diagnostics.h"
#include "stalab/presets.h"
#include "test_util.h"

using namespace sta;

namespace {

double naive_trajectory(const TokenTensor& x) {
  const std::size_t last = x.frames - 1;
  double total = 0;
  for (std::size_t s = 0; s < x.spatial; ++s) {
    std::vector<double> a(x.token(last, s).begin(), x.token(last, s).end());
    for (std::size_t t = 0; t < last; ++t) {
      double best = -2;
      for (std::size_t j = 0; j < x.spatial; ++j) {
        std::vector<double> b(x.token(t, j).begin(), x.token(t, j).end());
        best = std::max(best, testing::naive_cos(a, b));
      }
      total += best;
    }
  }
  return total / static_cast<double>(x.spatial);
}

ModelConfig fd_model(int depth) {
  ModelConfig c;
  c.frames = 2;
  c.height = 8;
  c.width = 16;
  c.tube_frames = 2;
  c.tube_height = 4;
  c.tube_width = 4;
  c.depth = depth;
  c.dim = 8;
  c.heads = 2;
  c.classes = 3;
  return c;
}

Video smooth_video(const ModelConfig& c) {
  Video v(c.frames, c.height, c.width);
  for (int t = 0; t < c.frames; ++t)
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x)
        for (int ch = 0; ch < 3; ++ch)
          v.at(t, y, x, ch) = 0.5f + 0.4f * std::sin(0.3f * x + 0.7f * y + 1.1f * ch + 0.5f * t);
  return v;
}

}  // namespace

TEST_CASE("trajectory_sum: identical frames give n_t - 1") {
  const TokenTensor one = testing::random_tokens(1, 6, 5, 1);
  TokenTensor x(4, 6, 5);
  for (std::size_t t = 0; t < 4; ++t)
    std::copy(one.data.begin(), one.data.end(), x.data.begin() + t * 30);
  CHECK(trajectory_sum(x) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(trajectory_sum(one) == 0.0);
}

TEST_CASE("trajectory_sum matches a naive reference and stays in bounds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TokenTensor x = testing::random_tokens(3, 4, 5, seed);
    const double got = trajectory_sum(x);
    CHECK(got == doctest::Approx(naive_trajectory(x)).epsilon(1e-6));
    CHECK(got <= 2.0 + 1e-9);
    CHECK(got >= -2.0 - 1e-9);
  }
}

TEST_CASE("trajectory_sum rejects zero-norm tokens") {
  TokenTensor x = testing::random_tokens(2, 3, 4, 2);
  for (std::size_t c = 0; c < 4; ++c) x.at(0, 1, c) = 0.0f;
  CHECK_THROWS_AS(trajectory_sum(x), DomainError);
}

TEST_CASE("flops_model reproduces the published cost table within 5%") {
  struct Row {
    const char* model;
    double g[4];
  };
  const Row rows[] = {{"vit-s", {57, 42, 35, 29}},
                      {"vit-b", {180, 136, 116, 96}},
                      {"vit-l", {597, 446, 376, 308}},
                      {"vit-h", {1192, 890, 748, 611}}};
  const int r1s[] = {0, 32, 48, 64};
  for (const Row& row : rows) {
    const ModelConfig cfg = model_preset(row.model);
    for (int k = 0; k < 4; ++k) {
      StaConfig sta;
      sta.r1 = r1s[k];
      const FlopsReport f = flops_model(cfg, sta);
      INFO(row.model << " r1=" << r1s[k] << " -> " << f.gflops());
      CHECK(std::fabs(f.gflops() - row.g[k]) <= 0.05 * row.g[k]);
    }
  }
}

TEST_CASE("flops_model: r1 = 0 and disabled equal the baseline; cost decreases in r1") {
  const ModelConfig cfg = model_preset("vit-b");
  StaConfig sta;
  sta.r1 = 0;
  const FlopsReport zero = flops_model(cfg, sta);
  const FlopsReport none = flops_model(cfg, std::nullopt);
  CHECK(zero.total_macs == zero.baseline_total_macs);
  CHECK(none.total_macs == none.baseline_total_macs);
  CHECK(zero.reduction_fraction == 0.0);
  std::int64_t prev = zero.total_macs;
  for (int r1 = 8; r1 <= 64; r1 += 8) {
    sta.r1 = r1;
    const FlopsReport f = flops_model(cfg, sta);
    CHECK(f.total_macs < prev);
    prev = f.total_macs;
  }
  CHECK(block_macs(10, 4) == 12 * 10 * 16 + 2 * 100 * 4);
}

TEST_CASE("gradnorm_fd: constant loss gives a zero heatmap") {
  const ModelConfig c = fd_model(1);
  Weights w = init_weights(c, 3);
  std::fill(w.head.data.begin(), w.head.data.end(), 0.0f);
  const double h = 1e-3;
  const GradHeatmap g = gradnorm_fd(smooth_video(c), c, w, 0, h);
  for (double v : g.values) CHECK(std::fabs(v) <= 10 * h * h);
}

TEST_CASE("gradnorm_fd: linear map matches the closed form") {
  const ModelConfig c = fd_model(0);
  const Weights w = init_weights(c, 4);
  const int label = 1;
  const GradHeatmap g = gradnorm_fd(smooth_video(c), c, w, label, 1e-3, LossKind::kLogit);
  const std::size_t n = g.frames * g.spatial;
  double expect = 0;
  for (int ch = 0; ch < c.dim; ++ch) expect += std::fabs(w.head(ch, label));
  expect /= static_cast<double>(n);
  for (double v : g.values) CHECK(std::fabs(v - expect) <= 1e-4);
}

TEST_CASE("gradnorm_fd: halving h is second-order consistent") {
  const ModelConfig c = fd_model(2);
  const Weights w = init_weights(c, 5);
  const Video v = smooth_video(c);
  const double h = 1e-2;
  const GradHeatmap g1 = gradnorm_fd(v, c, w, 2, h);
  const GradHeatmap g2 = gradnorm_fd(v, c, w, 2, h / 2);
  const GradHeatmap g4 = gradnorm_fd(v, c, w, 2, h / 4);
  for (std::size_t i = 0; i < g1.values.size(); ++i) {
    CHECK(std::fabs(g1.values[i] - g2.values[i]) <=
          4 * std::fabs(g2.values[i] - g4.values[i]) + 1e-6);
  }
  const GradHeatmap again = gradnorm_fd(v, c, w, 2, h);
  CHECK(again.values == g1.values);
}

TEST_CASE("gradnorm_fd: argument checks") {
  const ModelConfig c = fd_model(1);
  const Weights w = init_weights(c, 6);
  CHECK_THROWS_AS(gradnorm_fd(smooth_video(c), c, w, 3, 1e-3), ConfigError);
  CHECK_THROWS_AS(gradnorm_fd(smooth_video(c), c, w, 0, 0.0), ConfigError);
}

TEST_CASE("retention_stats: keep-all retains everything") {
  SelectionTrace trace;
  trace.kept_indices = {{0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}};
  const RetentionStats s =
      retention_stats(trace, {{0.1f, 0.9f, 0.2f, 0.3f, 0.4f}, {1, 0, 0, 0, 0}});
  CHECK(s.top_decile_retention == 1.0);
  CHECK(s.per_frame_overlap == std::vector<double>{1.0, 1.0});
}

TEST_CASE("retention_stats: random half pruning retains half the top decile") {
  std::vector<std::vector<float>> sem(1, std::vector<float>(20));
  for (std::size_t i = 0; i < 20; ++i) sem[0][i] = static_cast<float>(i) / 19.0f;
  const TokenTensor x = testing::random_tokens(1, 20, 2, 7);
  double total = 0;
  const int trials = 1000;
  for (int seed = 0; seed < trials; ++seed) {
    const PruneResult res = random_prune_clip(x, 10, seed, 0);
    total += retention_stats(res.trace, sem).top_decile_retention;
  }
  CHECK(std::fabs(total / trials - 0.5) <= 0.05);
}
