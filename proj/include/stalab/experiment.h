// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stalab/diagnostics.h"
#include "stalab/stapune.h"
#include "stalab/synthetic.h"
#include "stalab/vitcore.h"

namespace sta {

inline constexpr int kReportSchemaVersion = 1;

struct ExperimentConfig {
  std::string model_name = "toy";
  ModelConfig model;
  StaConfig sta;
  // Exactly one data source.
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::filesystem::path> tensor_path;
  int repeats = 1;
  std::uint64_t seed = 0;
  // Block whose output feeds the trajectory sum; 0 = last block.
  int trajectory_block = 0;
};

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev; 0 for a single value
  bool operator==(const Stat&) const = default;
};

Stat summarize(const std::vector<double>& values);

struct ReportConfig {
  std::string model_name;
  ModelConfig model;
  std::string method;
  int r1 = 0;
  std::string schedule;
  std::vector<int> insertion_blocks;
  std::vector<int> drops;
  std::vector<std::string> orders;
  std::string first_frame;
  std::string similarity_head;
  bool scaled_softmax = false;
  std::string score_mode;
  std::string data_source;  // "synthetic" or the tensor path
  std::optional<SyntheticSpec> synthetic;  // null for tensor inputs
  int repeats = 0;
  std::uint64_t seed = 0;
  int trajectory_block = 0;
  bool operator==(const ReportConfig&) const = default;
};

struct Report {
  int schema_version = kReportSchemaVersion;
  ReportConfig config;
  std::vector<int> block_token_counts;
  std::vector<int> tokens_per_frame;  // after each stage
  Stat logits_drift;                  // L-inf between pruned/unpruned logits
  Stat trajectory_unpruned;
  Stat trajectory_random;
  Stat trajectory_sta;
  std::vector<Stat> retention;  // top-decile retention per stage
  FlopsReport flops;
  double wall_clock_ms = 0.0;  // serialized under "timing"
};

/// Runs the unpruned, random-pruned and STA-pruned forwards of one model
/// (weights drawn from `seed`) on clips and pruning draws seeded seed,
/// seed+1, ..., aggregating over repeats.
Report run_experiment(const ExperimentConfig& config);

nlohmann::json to_json(const FlopsReport& f);
nlohmann::json to_json(const PruneTrace& trace);
nlohmann::json to_json(const Report& r);

// Strict reader: a missing key, an unknown key, a wrong type or another
// schema version throws ConfigError.
Report report_from_json(const nlohmann::json& j);

}  // namespace sta
