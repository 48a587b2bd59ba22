// SPDX-License-Identifier: Apache-2.0
//
// Semantic-aware temporal accumulation (STA) token pruning.
//
// Tokens of the first frame are thinned by an image-style method. For every
// later frame, a drop probability is carried over from the previous frame's
// surviving tokens through a softmax affinity (a Markov transition), damped
// by each token's activation magnitude, and the n_s - r tokens with the
// smallest score survive.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stalab/numkernel.h"
#include "stalab/tokens.h"

namespace sta {

enum class Schedule { kDecreasing, kConstant, kIncreasing };
enum class Order { kForward, kBackward };
enum class OrderPattern { kFBF, kBFB, kAllForward, kAllBackward };
enum class FirstFrameMethod { kRandom, kGrid, kBipartite };
enum class SimilarityHead { kQuery, kKey, kValue, kFfn };

// What a token is ranked by in frames after the first.
enum class ScoreMode {
  kCombined,      // (1 - F) * A
  kTemporalOnly,  // A
  kSemanticOnly,  // 1 - F
};

// Range over which the activation map is min-max normalized.
enum class SemanticScope { kGlobal, kPerFrame };

// Softmax axis of the transition matrix. kCurrent makes every column a
// distribution over the current frame's tokens.
enum class TransitionNorm { kCurrent, kPrevious };

// kRandom drops r uniformly chosen tokens per frame; it is the equal-budget
// baseline for the STA scorer.
enum class PruneMethod { kSta, kRandom };

struct StaConfig {
  int r1 = 64;
  Schedule schedule = Schedule::kDecreasing;
  // 1-based block indices after which pruning runs. Empty selects
  // 1, 1 + L/3, 1 + 2L/3.
  std::vector<int> insertion_blocks;
  // Per-stage accumulation order. Empty selects F-B-F alternation.
  std::vector<Order> orders;
  // Explicit per-stage drop counts, overriding r1/schedule when non-empty.
  std::vector<int> drops;
  FirstFrameMethod first_frame = FirstFrameMethod::kBipartite;
  SimilarityHead similarity_head = SimilarityHead::kKey;
  bool scaled_softmax = false;
  ScoreMode score_mode = ScoreMode::kCombined;
  SemanticScope semantic_scope = SemanticScope::kGlobal;
  TransitionNorm transition_norm = TransitionNorm::kCurrent;
  PruneMethod method = PruneMethod::kSta;
  std::uint64_t seed = 0;
};

struct StagePlan {
  int block = 0;  // 1-based
  int drop = 0;
  Order order = Order::kForward;
};

// PRNG seed for stage-local draws (first-frame and random pruning).
std::uint64_t stage_seed(std::uint64_t seed, int stage);

/// Per-stage drop counts: decreasing halves every stage, increasing doubles.
std::vector<int> make_schedule(int r1, Schedule kind, int n_stages = 3);
std::vector<Order> make_order_plan(int n_stages, OrderPattern pattern);
std::vector<int> default_insertion_blocks(int depth);

/// Resolves defaults and validates the plan against a model with `depth`
/// blocks and `spatial` tokens per frame. Throws ConfigError when a stage
/// would exhaust the tokens, an insertion block is out of range, or the
/// per-stage lists disagree in length.
std::vector<StagePlan> resolve_plan(const StaConfig& cfg, int depth,
                                    int spatial);

struct SelectionTrace {
  int stage = 0;
  int block = 0;
  int drop = 0;
  Order order = Order::kForward;
  std::size_t spatial_before = 0;
  // Sorted indices into the frame's tokens entering this stage.
  std::vector<std::vector<std::size_t>> kept_indices;
  // Score each token was judged by (length spatial_before per frame). Frame
  // 0 holds the first-frame method's drop score.
  std::vector<std::vector<float>> scores;
  // Normalized activation map the stage used, per frame.
  std::vector<std::vector<float>> semantic;
  // Feature-pair dot products and their multiply-accumulates.
  std::uint64_t affinity_dots = 0;
  std::uint64_t affinity_macs = 0;
};

// Observation hooks used by tests and diagnostics. Frame indices are in the
// processing order (already reversed for Backward stages).
struct StaProbe {
  std::function<void(std::size_t frame, std::span<const float> s_acc)>
      on_accumulator;
  std::function<void(std::size_t frame, const Matrix& transition)>
      on_transition;
};

// Activation map: L1 over channels, min-max normalized over the whole clip
// (kGlobal) or each frame (kPerFrame). Returned as n_t rows of n_s values.
std::vector<std::vector<float>> semantic_scores(
    const TokenTensor& x, SemanticScope scope = SemanticScope::kGlobal);

// Sorted indices of the n_s - r surviving first-frame tokens. `features` is
// n_s x d' and is read only by the bipartite method. If `drop_scores` is
// non-null it receives one score per token (higher = dropped first).
std::vector<std::size_t> first_frame_prune(const Matrix& features, int r,
                                           FirstFrameMethod method,
                                           std::uint64_t seed,
                                           std::vector<float>* drop_scores =
                                               nullptr,
                                           std::uint64_t* dot_counter =
                                               nullptr);

// n_s x m transition matrix softmax(curr * prev^T [/ sqrt(d')]). With
// kCurrent norm each column sums to one.
Matrix transition_matrix(const Matrix& curr, const Matrix& prev_kept,
                         bool scaled,
                         TransitionNorm norm = TransitionNorm::kCurrent,
                         std::uint64_t* dot_counter = nullptr);

std::vector<float> accumulate_step(const Matrix& transition,
                                   std::span<const float> s_prev);

std::vector<float> combine_score(std::span<const float> a_raw,
                                 std::span<const float> f_sem);

// Indices of the keep_count smallest scores, ascending. Equal scores keep the
// lower index.
std::vector<std::size_t> select_keep(std::span<const float> scores,
                                     std::size_t keep_count);

struct PruneResult {
  TokenTensor tokens;
  SelectionTrace trace;
};

/// Drops r tokens from every frame. `features` holds the similarity head's
/// projection of `x` (frame-major rows, same token order). `stage` keys the
/// first-frame PRNG stream and is recorded in the trace.
PruneResult prune_clip(const TokenTensor& x, int r, const StaConfig& cfg,
                       Order order, const Matrix& features, int stage = 0,
                       const StaProbe* probe = nullptr);

// Equal-budget baseline: r uniformly random drops per frame.
PruneResult random_prune_clip(const TokenTensor& x, int r, std::uint64_t seed,
                              int stage = 0);

std::string_view to_string(Schedule v);
std::string_view to_string(Order v);
std::string_view to_string(FirstFrameMethod v);
std::string_view to_string(SimilarityHead v);
std::string_view to_string(ScoreMode v);
std::string_view to_string(PruneMethod v);

Schedule parse_schedule(std::string_view s);
OrderPattern parse_order_pattern(std::string_view s);
FirstFrameMethod parse_first_frame(std::string_view s);
SimilarityHead parse_similarity_head(std::string_view s);
ScoreMode parse_score_mode(std::string_view s);

}  // namespace sta
