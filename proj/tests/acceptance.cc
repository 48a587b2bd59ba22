// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any
// criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "naive_sta.h"
#include "stalab/diagnostics.h"
#include "stalab/experiment.h"
#include "stalab/presets.h"
#include "stalab/stapune.h"
#include "stalab/synthetic.h"
#include "stalab/tensor_io.h"
#include "stalab/vitcore.h"
#include "test_util.h"

using namespace sta;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d  %-26s %s\n", ok ? "PASS" : "FAIL", id, name,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

// Guards a criterion so an unexpected exception is a FAIL line, not a crash.
void run(int id, const char* name, const std::function<bool(std::string&)>& body) {
  std::string detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(id, name, ok, detail);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Block weights with unit-scale projections so similarity features are
// well separated (small-init weights would make every transition uniform).
BlockWeights oracle_block(std::size_t d, std::uint64_t seed) {
  const CounterRng rng(seed, "acceptance/block");
  std::uint64_t c = 0;
  auto mat = [&](std::size_t r, std::size_t k) {
    Matrix m(r, k);
    const double scale = 1.0 / std::sqrt(static_cast<double>(r));
    for (float& v : m.data) v = static_cast<float>(scale * rng.normal(c++));
    return m;
  };
  auto vec = [&](std::size_t n, double mean, double sd) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(mean + sd * rng.normal(c++));
    return v;
  };
  BlockWeights w;
  w.wq = mat(d, d);
  w.wk = mat(d, d);
  w.wv = mat(d, d);
  w.wo = mat(d, d);
  w.w1 = mat(d, 4 * d);
  w.w2 = mat(4 * d, d);
  w.bq = vec(d, 0, 0.1);
  w.bk = vec(d, 0, 0.1);
  w.bv = vec(d, 0, 0.1);
  w.bo = vec(d, 0, 0.1);
  w.b1 = vec(4 * d, 0, 0.1);
  w.b2 = vec(d, 0, 0.1);
  w.ln1_gamma = vec(d, 1, 0.2);
  w.ln1_beta = vec(d, 0, 0.1);
  w.ln2_gamma = vec(d, 1, 0.2);
  w.ln2_beta = vec(d, 0, 0.1);
  return w;
}

struct OracleStats {
  int instances = 0;
  int kept_mismatches = 0;
  double max_score_err = 0.0;
  int accumulator_checks = 0;
  double max_acc_err = 0.0;
  bool acc_negative = false;
  int transition_checks = 0;
  double max_col_err = 0.0;
  int stages_checked = 0;
  int bound_violations = 0;
  int dot_mismatches = 0;
  double seconds = 0.0;
};

OracleStats run_oracle_suite() {
  const auto start = Clock::now();
  OracleStats st;
  const FirstFrameMethod methods[] = {FirstFrameMethod::kBipartite,
                                      FirstFrameMethod::kRandom,
                                      FirstFrameMethod::kGrid};
  const SimilarityHead heads[] = {SimilarityHead::kQuery, SimilarityHead::kKey,
                                  SimilarityHead::kValue, SimilarityHead::kFfn};
  std::uint64_t seed = 0;
  for (int rep = 0; rep < 10; ++rep) {
    for (FirstFrameMethod method : methods) {
      for (Order order : {Order::kForward, Order::kBackward}) {
        for (SimilarityHead head : heads) {
          for (bool scaled : {false, true}) {
            ++seed;
            const CounterRng dims(seed, "acceptance/dims");
            const std::size_t n_t = 2 + dims.below(0, 5);   // 2..6
            const std::size_t n_s = 4 + dims.below(1, 9);   // 4..12
            // d >= 3: at d = 2 layer norm maps every token onto one of two
            // vectors, so head features tie exactly and the kept set is
            // decided by rounding.
            const std::size_t d = 3 + dims.below(2, 6);     // 3..8
            const int r = static_cast<int>(1 + dims.below(3, n_s / 2));

            const TokenTensor x = testing::random_tokens(n_t, n_s, d, seed);
            const Matrix f =
                similarity_features(x, oracle_block(d, seed), head);
            StaConfig cfg;
            cfg.first_frame = method;
            cfg.similarity_head = head;
            cfg.scaled_softmax = scaled;
            cfg.seed = seed;
            StaProbe probe;
            probe.on_accumulator = [&](std::size_t, std::span<const float> s) {
              double total = 0.0;
              for (float v : s) {
                if (v < 0.0f) st.acc_negative = true;
                total += v;
              }
              st.max_acc_err = std::max(st.max_acc_err, std::fabs(total - 1.0));
              ++st.accumulator_checks;
            };
            probe.on_transition = [&](std::size_t, const Matrix& p) {
              for (std::size_t j = 0; j < p.cols; ++j) {
                double col = 0.0;
                for (std::size_t i = 0; i < p.rows; ++i) col += p(i, j);
                st.max_col_err = std::max(st.max_col_err, std::fabs(col - 1.0));
              }
              ++st.transition_checks;
            };
            const int stage = rep;
            const PruneResult got = prune_clip(x, r, cfg, order, f, stage, &probe);
            const auto ref = testing::naive_sta(
                testing::to_frames(x), testing::to_frames(f, n_t, n_s), r, method,
                order == Order::kBackward, scaled, stage_seed(seed, stage));

            ++st.instances;
            if (got.trace.kept_indices != ref.kept) {
              ++st.kept_mismatches;
              std::fprintf(stderr,
                           "  mismatch: seed=%llu n_t=%zu n_s=%zu d=%zu r=%d "
                           "first_frame=%s order=%s head=%s scaled=%d\n",
                           static_cast<unsigned long long>(seed), n_t, n_s, d, r,
                           std::string(to_string(method)).c_str(),
                           std::string(to_string(order)).c_str(),
                           std::string(to_string(head)).c_str(), int(scaled));
            }
            for (std::size_t t = 0; t < n_t; ++t)
              for (std::size_t s = 0; s < ref.scores[t].size(); ++s)
                st.max_score_err = std::max(
                    st.max_score_err,
                    std::fabs(got.trace.scores[t][s] - ref.scores[t][s]));

            ++st.stages_checked;
            const std::uint64_t bound = n_t * n_s * (n_s - r) * d;
            if (got.trace.affinity_macs > bound) ++st.bound_violations;
            if (got.trace.affinity_dots != ref.dots) ++st.dot_mismatches;
          }
        }
      }
    }
  }
  st.seconds = seconds_since(start);
  return st;
}

SyntheticSpec redundant_clip_spec(const ModelConfig& m) {
  SyntheticSpec s;
  s.frames = m.frames;
  s.height = m.height;
  s.width = m.width;
  s.background = Background::kStaticTiles;
  s.redundancy = 0.95;
  s.noise_sigma = 0.02;
  s.foreground.block_size = 16;
  // Normalized pixel space: the background is uniform on [0, 0.5].
  s.pixel_mean = 0.25;
  s.pixel_std = 0.5 / std::sqrt(12.0);
  return s;
}

Video smooth_video(const ModelConfig& c) {
  Video v(c.frames, c.height, c.width);
  for (int t = 0; t < c.frames; ++t)
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x)
        for (int ch = 0; ch < 3; ++ch)
          v.at(t, y, x, ch) =
              0.5f + 0.4f * std::sin(0.3f * x + 0.7f * y + 1.1f * ch + 0.5f * t);
  return v;
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

std::string report_without_timing(const Report& r) {
  nlohmann::json j = to_json(r);
  j.erase("timing");
  return j.dump();
}

}  // namespace

int main() {
  // 1. FLOPs model against the published cost table.
  run(1, "FLOPs reproduction", [](std::string& detail) {
    const auto start = Clock::now();
    struct Row {
      const char* model;
      double g[4];
    };
    const Row rows[] = {{"vit-s", {57, 42, 35, 29}},
                        {"vit-b", {180, 136, 116, 96}},
                        {"vit-l", {597, 446, 376, 308}},
                        {"vit-h", {1192, 890, 748, 611}}};
    const int r1s[] = {0, 32, 48, 64};
    double worst = 0.0;
    std::string worst_at;
    for (const Row& row : rows) {
      for (int k = 0; k < 4; ++k) {
        StaConfig sta;
        sta.r1 = r1s[k];
        const double g = flops_model(model_preset(row.model), sta).gflops();
        const double rel = std::fabs(g - row.g[k]) / row.g[k];
        if (rel > worst) {
          worst = rel;
          worst_at = fmt("%s r1=%d: %.1fG vs %.0fG", row.model, r1s[k], g, row.g[k]);
        }
      }
    }
    const double secs = seconds_since(start);
    detail = fmt("16 cells, max rel err %.2f%% (%s), %.3fs", 100 * worst,
                 worst_at.c_str(), secs);
    return worst <= 0.05 && secs < 1.0;
  });

  const OracleStats oracle = run_oracle_suite();

  // 2. Implementation vs scalar-loop reference.
  report(2, "oracle equivalence",
         oracle.instances >= 100 && oracle.kept_mismatches == 0 &&
             oracle.max_score_err <= 1e-6 && oracle.seconds < 30.0,
         fmt("%d instances, %d kept-set mismatches, max score err %.2e, %.2fs",
             oracle.instances, oracle.kept_mismatches, oracle.max_score_err,
             oracle.seconds));

  // 3. Accumulator and transition probabilities.
  report(3, "probability invariant",
         oracle.accumulator_checks > 0 && oracle.transition_checks > 0 &&
             !oracle.acc_negative && oracle.max_acc_err <= 1e-6 &&
             oracle.max_col_err <= 1e-6,
         fmt("%d accumulators (max |sum-1| %.2e, negative: %s), %d transitions "
             "(max |col-1| %.2e)",
             oracle.accumulator_checks, oracle.max_acc_err,
             oracle.acc_negative ? "yes" : "no", oracle.transition_checks,
             oracle.max_col_err));

  // 4. Token counts through the toy model.
  run(4, "count invariant", [](std::string& detail) {
    const ModelConfig m = model_preset("toy");
    const Weights w = init_weights(m, 1);
    const Video v = gen_synthetic_video(redundant_clip_spec(m), 1);
    StaConfig sta;
    sta.r1 = 16;
    sta.schedule = Schedule::kDecreasing;
    const ForwardResult res = forward(v, m, w, sta);
    const int n_s = m.spatial_tokens(), n_t = m.frame_tokens();
    const std::vector<int> want_frames = {n_s - 16, n_s - 24, n_s - 28};
    // Every frame of a stage must hold the same count.
    std::vector<int> got_frames;
    bool uniform = res.trace.stages.size() == 3;
    for (const auto& stage : res.trace.stages) {
      const std::size_t count = stage.kept_indices.front().size();
      for (const auto& kept : stage.kept_indices) uniform = uniform && kept.size() == count;
      got_frames.push_back(static_cast<int>(count));
    }
    const bool frames_ok = uniform && got_frames == want_frames;

    // Expected tokens entering each block, from the plan alone.
    const std::vector<StagePlan> plan = resolve_plan(sta, m.depth, n_s);
    std::vector<int> want_blocks;
    for (int b = 1; b <= m.depth; ++b) {
      int spatial = n_s;
      for (const StagePlan& p : plan)
        if (p.block < b) spatial -= p.drop;
      want_blocks.push_back(n_t * spatial);
    }
    const bool blocks_ok = res.trace.block_token_counts == want_blocks;
    std::ostringstream os;
    os << "per-frame";
    for (int g : got_frames) os << ' ' << g;
    os << "; per-block";
    for (int c : res.trace.block_token_counts) os << ' ' << c;
    detail = os.str();
    return frames_ok && blocks_ok;
  });

  // 5 and 6 share two toy-model experiments over 24 clip seeds.
  const auto start56 = Clock::now();
  ExperimentConfig exp;
  exp.model_name = "toy";
  exp.model = model_preset("toy");
  exp.sta.r1 = 16;
  exp.synthetic = redundant_clip_spec(exp.model);
  exp.repeats = 24;
  exp.seed = 2024;
  Report combined, temporal;
  std::string error56;
  try {
    combined = run_experiment(exp);
    ExperimentConfig temporal_cfg = exp;
    temporal_cfg.sta.score_mode = ScoreMode::kTemporalOnly;
    temporal = run_experiment(temporal_cfg);
  } catch (const std::exception& e) {
    error56 = e.what();
  }
  const double secs56 = seconds_since(start56);

  // 5. Trajectory-sum ordering. The STA estimate is the mean over N clips;
  // its standard deviation is the sample stddev / sqrt(N).
  if (!error56.empty()) {
    report(5, "redundancy ordering", false, "exception: " + error56);
  } else {
    const double sta_mean = combined.trajectory_sta.mean;
    const double rnd_mean = combined.trajectory_random.mean;
    const double unp_mean = combined.trajectory_unpruned.mean;
    const double sd = combined.trajectory_sta.stddev;
    const double se = sd / std::sqrt(static_cast<double>(exp.repeats));
    const double gap_lo = rnd_mean - sta_mean, gap_hi = unp_mean - rnd_mean;
    report(5, "redundancy ordering",
           sta_mean < rnd_mean && rnd_mean < unp_mean && gap_lo >= 3 * se &&
               gap_hi >= 3 * se && secs56 < 120.0,
           fmt("N=%d: sta %.4f < random %.4f < unpruned %.4f; gaps %.1f and "
               "%.1f x stddev of the STA mean (%.1f and %.1f x per-clip "
               "stddev); %.1fs for criteria 5-6",
               exp.repeats, sta_mean, rnd_mean, unp_mean, gap_lo / se,
               gap_hi / se, gap_lo / sd, gap_hi / sd, secs56));
  }

  // 6. Combined score retains at least as much of the semantic top decile.
  if (!error56.empty()) {
    report(6, "scoring direction", false, "exception: " + error56);
  } else {
    auto average = [](const Report& r) {
      double total = 0.0;
      for (const Stat& s : r.retention) total += s.mean;
      return total / static_cast<double>(r.retention.size());
    };
    const double c = average(combined), t = average(temporal);
    report(6, "scoring direction", c >= t,
           fmt("top-decile retention over %d seeds: combined %.3f >= "
               "temporal-only %.3f",
               exp.repeats, c, t));
  }

  // 7. Transition dot products stay within n_t * n_s * (n_s - r) * d.
  report(7, "complexity bound",
         oracle.stages_checked == oracle.instances && oracle.bound_violations == 0 &&
             oracle.dot_mismatches == 0,
         fmt("%d stages, %d bound violations, %d dot-count mismatches vs reference",
             oracle.stages_checked, oracle.bound_violations, oracle.dot_mismatches));

  // 8. Finite-difference gradients.
  run(8, "FD-gradient validity", [](std::string& detail) {
    const ModelConfig lin = fd_model(0);
    const Weights lw = init_weights(lin, 4);
    const int label = 1;
    const GradHeatmap g =
        gradnorm_fd(smooth_video(lin), lin, lw, label, 1e-3, LossKind::kLogit);
    double closed = 0.0;
    for (int ch = 0; ch < lin.dim; ++ch) closed += std::fabs(lw.head(ch, label));
    closed /= static_cast<double>(g.frames * g.spatial);
    double lin_err = 0.0;
    for (double v : g.values) lin_err = std::max(lin_err, std::fabs(v - closed));

    const ModelConfig deep = fd_model(2);
    const Weights dw = init_weights(deep, 5);
    const Video v = smooth_video(deep);
    const double h = 1e-2;
    const GradHeatmap g1 = gradnorm_fd(v, deep, dw, 2, h);
    const GradHeatmap g2 = gradnorm_fd(v, deep, dw, 2, h / 2);
    const GradHeatmap g4 = gradnorm_fd(v, deep, dw, 2, h / 4);
    int violations = 0;
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i < g1.values.size(); ++i) {
      const double a = std::fabs(g1.values[i] - g2.values[i]);
      const double b = std::fabs(g2.values[i] - g4.values[i]);
      if (a > 4 * b + 1e-6) ++violations;
      if (b > 0) worst_ratio = std::max(worst_ratio, a / b);
    }
    detail = fmt("linear max err %.2e; Richardson %zu tokens, %d violations "
                 "(max step ratio %.3f)",
                 lin_err, g1.values.size(), violations, worst_ratio);
    return lin_err <= 1e-4 && violations == 0;
  });

  // 9. Determinism and the STTN format.
  run(9, "determinism & I/O", [](std::string& detail) {
    ExperimentConfig cfg;
    cfg.model_name = "tiny";
    cfg.model = model_preset("tiny");
    cfg.synthetic = redundant_clip_spec(cfg.model);
    cfg.synthetic->foreground.block_size = 4;
    cfg.sta.r1 = 2;
    cfg.repeats = 5;
    cfg.seed = 11;
    const bool same_report =
        report_without_timing(run_experiment(cfg)) ==
        report_without_timing(run_experiment(cfg));

    Tensor t;
    t.dims = {3, 5, 7};
    const CounterRng rng(9, "acceptance/tensor");
    for (std::uint64_t i = 0; i < 105; ++i)
      t.data.push_back(static_cast<float>(rng.normal(i)));
    t.data[0] = -0.0f;
    t.data[1] = 1e-42f;
    t.data[2] = std::numeric_limits<float>::infinity();
    const auto path = std::filesystem::temp_directory_path() / "stalab_acceptance.sttn";
    write_tensor(path, t);
    const Tensor back = read_tensor(path);
    std::filesystem::remove(path);
    const bool round_trip =
        back.dims == t.dims &&
        std::memcmp(back.data.data(), t.data.data(), t.data.size() * 4) == 0;

    Tensor small;
    small.dims = {2, 3};
    small.data.assign(6, 1.0f);
    const auto good = encode_tensor(small);
    auto field_of = [](std::vector<std::uint8_t> bytes) -> std::string {
      try {
        decode_tensor(bytes);
      } catch (const FormatError& e) {
        return e.field();
      }
      return "accepted";
    };
    auto bad_magic = good;
    bad_magic[0] = 'X';
    auto bad_version = good;
    bad_version[4] = 9;
    auto bad_dtype = good;
    bad_dtype[5] = 2;
    const std::vector<std::uint8_t> truncated(good.begin(), good.end() - 4);
    const bool typed = field_of(bad_magic) == "magic" &&
                       field_of(bad_version) == "version" &&
                       field_of(bad_dtype) == "dtype" &&
                       field_of(truncated) == "payload";
    detail = fmt("report bitwise-identical: %s; STTN round trip exact: %s; "
                 "typed errors (magic/version/dtype/payload): %s",
                 same_report ? "yes" : "no", round_trip ? "yes" : "no",
                 typed ? "yes" : "no");
    return same_report && round_trip && typed;
  });

  // 10. r = 0 identity and constant activations.
  run(10, "degenerate cases", [](std::string& detail) {
    const ModelConfig m = model_preset("toy");
    const Weights w = init_weights(m, 3);
    const Video v = gen_synthetic_video(redundant_clip_spec(m), 3);
    StaConfig zero;
    zero.r1 = 0;
    const bool identity =
        forward(v, m, w, zero).logits() == forward(v, m, w, std::nullopt).logits();

    // Every token equal: the semantic map vanishes and the combined score
    // reduces to the temporal score.
    TokenTensor flat(4, 12, 6, 0.5f);
    const Matrix feats = testing::random_features(4, 12, 6, 5);
    StaConfig cfg;
    cfg.seed = 5;
    const PruneResult a = prune_clip(flat, 4, cfg, Order::kForward, feats);
    StaConfig temporal_cfg = cfg;
    temporal_cfg.score_mode = ScoreMode::kTemporalOnly;
    const PruneResult b = prune_clip(flat, 4, temporal_cfg, Order::kForward, feats);
    bool semantic_zero = true;
    for (const auto& row : a.trace.semantic)
      for (float s : row) semantic_zero = semantic_zero && s == 0.0f;
    const bool temporal_driven = a.trace.kept_indices == b.trace.kept_indices;

    const Video constant(m.frames, m.height, m.width, 0.3f);
    StaConfig sta;
    sta.r1 = 16;
    const ForwardResult cres = forward(constant, m, w, sta);
    const bool constant_ok = all_finite(std::span<const float>(cres.logits()));

    detail = fmt("r1=0 logits bitwise equal: %s; constant tokens: semantic map "
                 "zero %s, temporal-driven %s; constant clip forward finite: %s",
                 identity ? "yes" : "no", semantic_zero ? "yes" : "no",
                 temporal_driven ? "yes" : "no", constant_ok ? "yes" : "no");
    return identity && semantic_zero && temporal_driven && constant_ok;
  });

  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
