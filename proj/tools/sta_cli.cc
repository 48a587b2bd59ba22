// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: prune, flops, bench, masks, gradnorm, synth.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "stalab/diagnostics.h"
#include "stalab/experiment.h"
#include "stalab/masks.h"
#include "stalab/presets.h"
#include "stalab/synthetic.h"
#include "stalab/tensor_io.h"

namespace {

using namespace sta;

struct Options {
  std::string model = "toy";
  int r1 = 16;
  std::string schedule = "decreasing";
  std::string order = "fbf";
  std::string first_frame = "bipartite";
  std::string sim_head = "k";
  std::string score_mode = "combined";
  std::string method = "sta";
  bool scaled_softmax = false;
  std::uint64_t seed = 0;
  std::string input;
  std::string out;
  std::string masks;
  int repeats = 1;
  // Synthetic clip: static tiles, 95% redundant, normalized so the [0, 0.5]
  // background has zero mean and unit variance.
  double redundancy = 0.95;
  double noise = 0.02;
  double pixel_mean = 0.25;
  double pixel_std = 0.5 / std::sqrt(12.0);
  int label = 0;
  double step = 1e-3;
  int trajectory_block = 0;
};

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--model", o.model, "Preset name or overrides such as L=4,d=32")
      ->capture_default_str();
}

void add_sta_flags(CLI::App* cmd, Options& o) {
  add_model_flags(cmd, o);
  cmd->add_option("--r1", o.r1, "Tokens dropped per frame at the first stage")
      ->capture_default_str();
  cmd->add_option("--schedule", o.schedule, "decreasing|constant|increasing")
      ->capture_default_str();
  cmd->add_option("--order", o.order, "Per-stage frame order: fbf|bfb|fff|bbb")
      ->capture_default_str();
  cmd->add_option("--first-frame", o.first_frame, "random|grid|bipartite")
      ->capture_default_str();
  cmd->add_option("--sim-head", o.sim_head, "Similarity features: q|k|v|ffn")
      ->capture_default_str();
  cmd->add_option("--score", o.score_mode, "combined|temporal|semantic")
      ->capture_default_str();
  cmd->add_option("--method", o.method, "sta|random")->capture_default_str();
  cmd->add_flag("--scaled-softmax", o.scaled_softmax,
                "Scale transition logits by 1/sqrt(d)");
}

void add_data_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "Seed for weights, data and pruning")
      ->capture_default_str();
  cmd->add_option("--input", o.input, "STTN video tensor (T x H x W x 3); synthetic if absent");
  cmd->add_option("--redundancy", o.redundancy, "Synthetic background redundancy")
      ->capture_default_str();
  cmd->add_option("--noise", o.noise, "Synthetic noise sigma")->capture_default_str();
  cmd->add_option("--pixel-mean", o.pixel_mean, "Synthetic normalization mean")
      ->capture_default_str();
  cmd->add_option("--pixel-std", o.pixel_std, "Synthetic normalization std")
      ->capture_default_str();
}

StaConfig sta_config(const Options& o, const ModelConfig& model) {
  StaConfig c;
  c.r1 = o.r1;
  c.schedule = parse_schedule(o.schedule);
  const int stages = static_cast<int>(default_insertion_blocks(model.depth).size());
  c.orders = make_order_plan(stages, parse_order_pattern(o.order));
  c.first_frame = parse_first_frame(o.first_frame);
  c.similarity_head = parse_similarity_head(o.sim_head);
  c.score_mode = parse_score_mode(o.score_mode);
  if (o.method == "sta") {
    c.method = PruneMethod::kSta;
  } else if (o.method == "random") {
    c.method = PruneMethod::kRandom;
  } else {
    throw ConfigError("unknown method '" + o.method + "' (sta|random)");
  }
  c.scaled_softmax = o.scaled_softmax;
  c.seed = o.seed;
  return c;
}

SyntheticSpec synthetic_spec(const Options& o, const ModelConfig& m) {
  SyntheticSpec s;
  s.frames = m.frames;
  s.height = m.height;
  s.width = m.width;
  s.redundancy = o.redundancy;
  s.noise_sigma = o.noise;
  s.pixel_mean = o.pixel_mean;
  s.pixel_std = o.pixel_std;
  s.foreground.block_size = std::max(1, std::min(m.height, m.width) / 4);
  return s;
}

Video load_video(const Options& o, const ModelConfig& m) {
  if (!o.input.empty()) return video_from_tensor(read_tensor(o.input));
  return gen_synthetic_video(synthetic_spec(o, m), o.seed);
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text << '\n';
  } else {
    write_file_atomic(out, text + "\n");
  }
}

ForwardResult run_prune(const Options& o, const ModelConfig& model) {
  const StaConfig sta = sta_config(o, model);
  resolve_plan(sta, model.depth, model.spatial_tokens());
  const Weights weights = init_weights(model, o.seed);
  return forward(load_video(o, model), model, weights, sta);
}

int cmd_prune(const Options& o) {
  const ModelConfig model = parse_model(o.model);
  const ForwardResult res = run_prune(o, model);
  nlohmann::json j = to_json(res.trace);
  emit(o.out, j.dump(2));
  if (!o.masks.empty()) {
    export_masks(res.trace, model.grid_rows(), model.grid_cols(), o.masks);
  }
  return 0;
}

int cmd_masks(const Options& o) {
  const ModelConfig model = parse_model(o.model);
  const ForwardResult res = run_prune(o, model);
  const auto files =
      export_masks(res.trace, model.grid_rows(), model.grid_cols(), o.masks);
  std::cout << "wrote " << files.size() << " files to " << o.masks << '\n';
  return 0;
}

int cmd_flops(const Options& o) {
  const ModelConfig model = parse_model(o.model);
  const FlopsReport f = flops_model(model, sta_config(o, model));
  if (!o.out.empty()) write_file_atomic(o.out, to_json(f).dump(2) + "\n");
  std::printf("%-6s %8s %16s\n", "block", "tokens", "GMACs");
  for (const BlockFlops& b : f.per_block) {
    std::printf("%-6d %8lld %16.3f\n", b.block, static_cast<long long>(b.tokens),
                static_cast<double>(b.macs) * 1e-9);
  }
  std::printf("embed  %8s %16.3f\n", "", static_cast<double>(f.embed_macs) * 1e-9);
  std::printf("head   %8s %16.3f\n", "", static_cast<double>(f.head_macs) * 1e-9);
  std::printf("total %.2f G (baseline %.2f G, reduction %.1f%%)\n", f.gflops(),
              f.baseline_gflops(), 100.0 * f.reduction_fraction);
  return 0;
}

int cmd_bench(const Options& o) {
  ExperimentConfig cfg;
  cfg.model_name = o.model;
  cfg.model = parse_model(o.model);
  cfg.sta = sta_config(o, cfg.model);
  if (o.input.empty()) {
    cfg.synthetic = synthetic_spec(o, cfg.model);
  } else {
    cfg.tensor_path = o.input;
  }
  cfg.repeats = o.repeats;
  cfg.seed = o.seed;
  cfg.trajectory_block = o.trajectory_block;
  const Report rep = run_experiment(cfg);
  emit(o.out, to_json(rep).dump(2));
  return 0;
}

int cmd_gradnorm(const Options& o) {
  const ModelConfig model = parse_model(o.model);
  const Weights weights = init_weights(model, o.seed);
  const GradHeatmap g =
      gradnorm_fd(load_video(o, model), model, weights, o.label, o.step);
  if (!o.out.empty()) {
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(g.frames),
              static_cast<std::uint32_t>(g.spatial)};
    for (double v : g.values) t.data.push_back(static_cast<float>(v));
    write_tensor(o.out, t);
    return 0;
  }
  for (std::size_t t = 0; t < g.frames; ++t) {
    for (std::size_t s = 0; s < g.spatial; ++s) {
      std::printf("%s%.6g", s ? " " : "", g.at(t, s));
    }
    std::printf("\n");
  }
  return 0;
}

int cmd_synth(const Options& o) {
  const ModelConfig model = parse_model(o.model);
  write_tensor(o.out, to_tensor(gen_synthetic_video(synthetic_spec(o, model), o.seed)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-aware temporal token pruning for video transformers"};
  app.require_subcommand(1);
  Options o;

  auto* prune = app.add_subcommand("prune", "Run one pruned forward pass and print the selection trace");
  add_sta_flags(prune, o);
  add_data_flags(prune, o);
  prune->add_option("--out", o.out, "Write the trace JSON here instead of stdout");
  prune->add_option("--masks", o.masks, "Also export masks to this directory");

  auto* flops = app.add_subcommand("flops", "Print the analytic cost model");
  add_sta_flags(flops, o);
  flops->add_option("--out", o.out, "Also write the FLOPs report as JSON");

  auto* bench = app.add_subcommand("bench", "Unpruned vs random vs STA experiment report");
  add_sta_flags(bench, o);
  add_data_flags(bench, o);
  bench->add_option("--repeats", o.repeats, "Seeds seed..seed+repeats-1")->capture_default_str();
  bench->add_option("--trajectory-block", o.trajectory_block,
                    "Block whose output feeds the trajectory sum (0 = last)")
      ->capture_default_str();
  bench->add_option("--out", o.out, "Write the report JSON here instead of stdout");

  auto* masks = app.add_subcommand("masks", "Export per-stage keep masks as PGM images");
  add_sta_flags(masks, o);
  add_data_flags(masks, o);
  masks->add_option("--masks", o.masks, "Output directory")->required();

  auto* grad = app.add_subcommand("gradnorm", "Finite-difference per-token gradient heatmap");
  add_model_flags(grad, o);
  add_data_flags(grad, o);
  grad->add_option("--label", o.label, "Target class")->capture_default_str();
  grad->add_option("--step", o.step, "Central-difference step")->capture_default_str();
  grad->add_option("--out", o.out, "Write a frames x spatial STTN tensor instead of text");

  auto* synth = app.add_subcommand("synth", "Write a synthetic clip as an STTN tensor");
  add_model_flags(synth, o);
  add_data_flags(synth, o);
  synth->add_option("--out", o.out, "Output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prune) return cmd_prune(o);
    if (*flops) return cmd_flops(o);
    if (*bench) return cmd_bench(o);
    if (*masks) return cmd_masks(o);
    if (*grad) return cmd_gradnorm(o);
    if (*synth) return cmd_synth(o);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error (" << e.field() << "): " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
