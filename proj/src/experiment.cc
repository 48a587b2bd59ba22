// SPDX-License-Identifier: Apache-2.0
#include "stalab/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <initializer_list>
#include <string>
#include <string_view>

#include "stalab/error.h"
#include "stalab/tensor_io.h"

namespace sta {
namespace {

using nlohmann::json;

struct RepeatResult {
  double drift = 0.0;
  double traj_unpruned = 0.0;
  double traj_random = 0.0;
  double traj_sta = 0.0;
  std::vector<double> retention;
  std::vector<int> block_counts;
};

RepeatResult run_repeat(const ExperimentConfig& cfg, const Weights& weights,
                        const Video& fixed_video, std::uint64_t seed) {
  const Video video = cfg.synthetic
                          ? gen_synthetic_video(*cfg.synthetic, seed)
                          : fixed_video;
  ForwardOptions opts;
  opts.capture_block = cfg.trajectory_block;

  StaConfig sta = cfg.sta;
  sta.seed = seed;
  sta.method = PruneMethod::kSta;
  StaConfig rnd = sta;
  rnd.method = PruneMethod::kRandom;

  const ForwardResult base = forward(video, cfg.model, weights, std::nullopt, opts);
  const ForwardResult pruned = forward(video, cfg.model, weights, sta, opts);
  const ForwardResult random = forward(video, cfg.model, weights, rnd, opts);

  RepeatResult r;
  for (std::size_t i = 0; i < base.logits().size(); ++i) {
    r.drift = std::max(
        r.drift, static_cast<double>(std::fabs(base.logits()[i] - pruned.logits()[i])));
  }
  r.traj_unpruned = trajectory_sum(base.tokens);
  r.traj_random = trajectory_sum(random.tokens);
  r.traj_sta = trajectory_sum(pruned.tokens);
  for (const SelectionTrace& st : pruned.trace.stages)
    r.retention.push_back(retention_stats(st, st.semantic).top_decile_retention);
  r.block_counts = pruned.trace.block_token_counts;
  return r;
}

void expect_keys(const json& j, std::initializer_list<std::string_view> keys,
                 const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
      throw ConfigError(where + ": unknown field '" + item.key() + "'");
    }
  }
  for (std::string_view k : keys) {
    if (!j.contains(k)) {
      throw ConfigError(where + ": missing field '" + std::string(k) + "'");
    }
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

Stat stat_from(const json& j, const std::string& where) {
  expect_keys(j, {"mean", "stddev"}, where);
  return {field<double>(j, "mean", where), field<double>(j, "stddev", where)};
}

json model_json(const ModelConfig& m) {
  return {{"T", m.frames}, {"H", m.height},      {"W", m.width},
          {"t", m.tube_frames}, {"h", m.tube_height}, {"w", m.tube_width},
          {"L", m.depth}, {"d", m.dim}, {"heads", m.heads},
          {"classes", m.classes}};
}

ModelConfig model_from(const json& j, const std::string& where) {
  expect_keys(j, {"T", "H", "W", "t", "h", "w", "L", "d", "heads", "classes"},
              where);
  ModelConfig m;
  m.frames = field<int>(j, "T", where);
  m.height = field<int>(j, "H", where);
  m.width = field<int>(j, "W", where);
  m.tube_frames = field<int>(j, "t", where);
  m.tube_height = field<int>(j, "h", where);
  m.tube_width = field<int>(j, "w", where);
  m.depth = field<int>(j, "L", where);
  m.dim = field<int>(j, "d", where);
  m.heads = field<int>(j, "heads", where);
  m.classes = field<int>(j, "classes", where);
  return m;
}

json synthetic_json(const std::optional<SyntheticSpec>& spec) {
  if (!spec) return nullptr;
  const Foreground& f = spec->foreground;
  return {{"T", spec->frames},
          {"H", spec->height},
          {"W", spec->width},
          {"background", spec->background == Background::kStaticTiles
                             ? "static_tiles"
                             : "slow_drift"},
          {"tile_size", spec->tile_size},
          {"foreground",
           {{"block_size", f.block_size},
            {"velocity_x", f.velocity_x},
            {"velocity_y", f.velocity_y},
            {"intensity", f.intensity},
            {"x0", f.x0},
            {"y0", f.y0}}},
          {"noise_sigma", spec->noise_sigma},
          {"redundancy", spec->redundancy},
          {"pixel_mean", spec->pixel_mean},
          {"pixel_std", spec->pixel_std}};
}

std::optional<SyntheticSpec> synthetic_from(const json& j, const std::string& where) {
  if (j.is_null()) return std::nullopt;
  expect_keys(j,
              {"T", "H", "W", "background", "tile_size", "foreground",
               "noise_sigma", "redundancy", "pixel_mean", "pixel_std"},
              where);
  SyntheticSpec s;
  s.frames = field<int>(j, "T", where);
  s.height = field<int>(j, "H", where);
  s.width = field<int>(j, "W", where);
  const auto background = field<std::string>(j, "background", where);
  if (background == "static_tiles") {
    s.background = Background::kStaticTiles;
  } else if (background == "slow_drift") {
    s.background = Background::kSlowDrift;
  } else {
    throw ConfigError(where + ".background: unknown kind '" + background + "'");
  }
  s.tile_size = field<int>(j, "tile_size", where);
  const json& f = j.at("foreground");
  const std::string fw = where + ".foreground";
  expect_keys(f, {"block_size", "velocity_x", "velocity_y", "intensity", "x0", "y0"},
              fw);
  s.foreground.block_size = field<int>(f, "block_size", fw);
  s.foreground.velocity_x = field<int>(f, "velocity_x", fw);
  s.foreground.velocity_y = field<int>(f, "velocity_y", fw);
  s.foreground.intensity = field<float>(f, "intensity", fw);
  s.foreground.x0 = field<int>(f, "x0", fw);
  s.foreground.y0 = field<int>(f, "y0", fw);
  s.noise_sigma = field<double>(j, "noise_sigma", where);
  s.redundancy = field<double>(j, "redundancy", where);
  s.pixel_mean = field<double>(j, "pixel_mean", where);
  s.pixel_std = field<double>(j, "pixel_std", where);
  return s;
}

}  // namespace

Stat summarize(const std::vector<double>& values) {
  Stat s;
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

Report run_experiment(const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  config.model.validate();
  if (config.synthetic.has_value() == config.tensor_path.has_value()) {
    throw ConfigError("experiment needs exactly one data source");
  }
  if (config.repeats < 1) throw ConfigError("repeats must be at least 1");
  const std::vector<StagePlan> plan = resolve_plan(
      config.sta, config.model.depth, config.model.spatial_tokens());

  Video fixed;
  if (config.tensor_path) {
    fixed = video_from_tensor(read_tensor(*config.tensor_path));
  } else {
    config.synthetic->validate();
  }

  const Weights weights = init_weights(config.model, config.seed);
  std::vector<std::future<RepeatResult>> jobs;
  for (int i = 0; i < config.repeats; ++i) {
    jobs.push_back(std::async(std::launch::async, run_repeat, std::cref(config),
                              std::cref(weights), std::cref(fixed),
                              config.seed + static_cast<std::uint64_t>(i)));
  }
  std::vector<RepeatResult> results;
  for (auto& j : jobs) results.push_back(j.get());

  Report rep;
  ReportConfig& rc = rep.config;
  rc.model_name = config.model_name;
  rc.model = config.model;
  rc.method = std::string(to_string(config.sta.method));
  rc.r1 = config.sta.r1;
  rc.schedule = std::string(to_string(config.sta.schedule));
  for (const StagePlan& st : plan) {
    rc.insertion_blocks.push_back(st.block);
    rc.drops.push_back(st.drop);
    rc.orders.emplace_back(to_string(st.order));
  }
  rc.first_frame = std::string(to_string(config.sta.first_frame));
  rc.similarity_head = std::string(to_string(config.sta.similarity_head));
  rc.scaled_softmax = config.sta.scaled_softmax;
  rc.score_mode = std::string(to_string(config.sta.score_mode));
  rc.data_source =
      config.tensor_path ? config.tensor_path->string() : std::string("synthetic");
  rc.synthetic = config.synthetic;
  rc.repeats = config.repeats;
  rc.seed = config.seed;
  rc.trajectory_block = config.trajectory_block;

  rep.block_token_counts = results.front().block_counts;
  int spatial = config.model.spatial_tokens();
  for (const StagePlan& st : plan) {
    spatial -= st.drop;
    rep.tokens_per_frame.push_back(spatial);
  }
  auto collect = [&](auto member) {
    std::vector<double> v;
    for (const RepeatResult& r : results) v.push_back(r.*member);
    return summarize(v);
  };
  rep.logits_drift = collect(&RepeatResult::drift);
  rep.trajectory_unpruned = collect(&RepeatResult::traj_unpruned);
  rep.trajectory_random = collect(&RepeatResult::traj_random);
  rep.trajectory_sta = collect(&RepeatResult::traj_sta);
  for (std::size_t k = 0; k < plan.size(); ++k) {
    std::vector<double> v;
    for (const RepeatResult& r : results) v.push_back(r.retention[k]);
    rep.retention.push_back(summarize(v));
  }
  rep.flops = flops_model(config.model, config.sta);
  rep.wall_clock_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  return rep;
}

json to_json(const FlopsReport& f) {
  json blocks = json::array();
  for (const BlockFlops& b : f.per_block)
    blocks.push_back({{"block", b.block}, {"tokens", b.tokens}, {"macs", b.macs}});
  return {{"per_block", blocks},
          {"embed_macs", f.embed_macs},
          {"head_macs", f.head_macs},
          {"total_macs", f.total_macs},
          {"baseline_total_macs", f.baseline_total_macs},
          {"reduction_fraction", f.reduction_fraction}};
}

json to_json(const PruneTrace& trace) {
  json stages = json::array();
  for (const SelectionTrace& st : trace.stages) {
    stages.push_back({{"stage", st.stage},
                      {"block", st.block},
                      {"drop", st.drop},
                      {"order", std::string(to_string(st.order))},
                      {"spatial_before", st.spatial_before},
                      {"kept_indices", st.kept_indices},
                      {"scores", st.scores},
                      {"affinity_dots", st.affinity_dots},
                      {"affinity_macs", st.affinity_macs}});
  }
  return {{"stages", stages},
          {"block_token_counts", trace.block_token_counts},
          {"logits", trace.logits}};
}

json to_json(const Report& r) {
  const ReportConfig& c = r.config;
  json retention = json::array();
  for (const Stat& s : r.retention) retention.push_back(stat_json(s));
  return {
      {"schema_version", r.schema_version},
      {"config",
       {{"model_name", c.model_name},
        {"model", model_json(c.model)},
        {"method", c.method},
        {"r1", c.r1},
        {"schedule", c.schedule},
        {"insertion_blocks", c.insertion_blocks},
        {"drops", c.drops},
        {"orders", c.orders},
        {"first_frame", c.first_frame},
        {"similarity_head", c.similarity_head},
        {"scaled_softmax", c.scaled_softmax},
        {"score_mode", c.score_mode},
        {"data_source", c.data_source},
        {"synthetic", synthetic_json(c.synthetic)},
        {"repeats", c.repeats},
        {"seed", c.seed},
        {"trajectory_block", c.trajectory_block}}},
      {"block_token_counts", r.block_token_counts},
      {"tokens_per_frame", r.tokens_per_frame},
      {"logits_drift", stat_json(r.logits_drift)},
      {"trajectory_sum",
       {{"unpruned", stat_json(r.trajectory_unpruned)},
        {"random_pruned", stat_json(r.trajectory_random)},
        {"sta_pruned", stat_json(r.trajectory_sta)}}},
      {"retention", retention},
      {"flops", to_json(r.flops)},
      {"timing", {{"wall_clock_ms", r.wall_clock_ms}}}};
}

Report report_from_json(const json& j) {
  expect_keys(j,
              {"schema_version", "config", "block_token_counts",
               "tokens_per_frame", "logits_drift", "trajectory_sum",
               "retention", "flops", "timing"},
              "report");
  Report r;
  r.schema_version = field<int>(j, "schema_version", "report");
  if (r.schema_version != kReportSchemaVersion) {
    throw ConfigError("report: unsupported schema version " +
                      std::to_string(r.schema_version));
  }

  const json& c = j.at("config");
  const std::string cw = "report.config";
  expect_keys(c,
              {"model_name", "model", "method", "r1", "schedule",
               "insertion_blocks", "drops", "orders", "first_frame",
               "similarity_head", "scaled_softmax", "score_mode",
               "data_source", "synthetic", "repeats", "seed", "trajectory_block"},
              cw);
  ReportConfig& rc = r.config;
  rc.model_name = field<std::string>(c, "model_name", cw);
  rc.model = model_from(c.at("model"), cw + ".model");
  rc.method = field<std::string>(c, "method", cw);
  rc.r1 = field<int>(c, "r1", cw);
  rc.schedule = field<std::string>(c, "schedule", cw);
  rc.insertion_blocks = field<std::vector<int>>(c, "insertion_blocks", cw);
  rc.drops = field<std::vector<int>>(c, "drops", cw);
  rc.orders = field<std::vector<std::string>>(c, "orders", cw);
  rc.first_frame = field<std::string>(c, "first_frame", cw);
  rc.similarity_head = field<std::string>(c, "similarity_head", cw);
  rc.scaled_softmax = field<bool>(c, "scaled_softmax", cw);
  rc.score_mode = field<std::string>(c, "score_mode", cw);
  rc.data_source = field<std::string>(c, "data_source", cw);
  rc.synthetic = synthetic_from(c.at("synthetic"), cw + ".synthetic");
  rc.repeats = field<int>(c, "repeats", cw);
  rc.seed = field<std::uint64_t>(c, "seed", cw);
  rc.trajectory_block = field<int>(c, "trajectory_block", cw);

  r.block_token_counts = field<std::vector<int>>(j, "block_token_counts", "report");
  r.tokens_per_frame = field<std::vector<int>>(j, "tokens_per_frame", "report");
  r.logits_drift = stat_from(j.at("logits_drift"), "report.logits_drift");
  const json& traj = j.at("trajectory_sum");
  expect_keys(traj, {"unpruned", "random_pruned", "sta_pruned"},
              "report.trajectory_sum");
  r.trajectory_unpruned = stat_from(traj.at("unpruned"), "report.trajectory_sum");
  r.trajectory_random = stat_from(traj.at("random_pruned"), "report.trajectory_sum");
  r.trajectory_sta = stat_from(traj.at("sta_pruned"), "report.trajectory_sum");
  if (!j.at("retention").is_array()) {
    throw ConfigError("report.retention: expected an array");
  }
  for (const json& s : j.at("retention")) r.retention.push_back(stat_from(s, "report.retention"));

  const json& f = j.at("flops");
  const std::string fw = "report.flops";
  expect_keys(f,
              {"per_block", "embed_macs", "head_macs", "total_macs",
               "baseline_total_macs", "reduction_fraction"},
              fw);
  if (!f.at("per_block").is_array()) throw ConfigError(fw + ".per_block: expected an array");
  for (const json& b : f.at("per_block")) {
    expect_keys(b, {"block", "tokens", "macs"}, fw + ".per_block");
    r.flops.per_block.push_back({field<int>(b, "block", fw),
                                 field<std::int64_t>(b, "tokens", fw),
                                 field<std::int64_t>(b, "macs", fw)});
  }
  r.flops.embed_macs = field<std::int64_t>(f, "embed_macs", fw);
  r.flops.head_macs = field<std::int64_t>(f, "head_macs", fw);
  r.flops.total_macs = field<std::int64_t>(f, "total_macs", fw);
  r.flops.baseline_total_macs = field<std::int64_t>(f, "baseline_total_macs", fw);
  r.flops.reduction_fraction = field<double>(f, "reduction_fraction", fw);

  const json& timing = j.at("timing");
  expect_keys(timing, {"wall_clock_ms"}, "report.timing");
  r.wall_clock_ms = field<double>(timing, "wall_clock_ms", "report.timing");
  return r;
}

}  // namespace sta
