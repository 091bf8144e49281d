#pragma once

#include <filesystem>
#include <string>

#include "fend/cluster.hpp"
#include "fend/extractor.hpp"
#include "fend/kalman.hpp"
#include "fend/training.hpp"

#include "json.hpp"

namespace fend::cfg {

// Everything one pipeline run needs. `preset` picks the base defaults:
// "paper" keeps the full-scale settings, "desk" shrinks the networks and
// schedule for CPU-sized datasets (the schedule is additionally scaled by the
// dataset size at run time).
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path dataset;
  std::filesystem::path out_dir = "runs";
  std::string preset = "desk";
  extractor::ExtractorConfig extractor;
  cluster::ClusterConfig cluster;
  train::TrainConfig train;
  kalman::KalmanConfig kalman;
  std::size_t cdf_bins = 100;
};

void apply_preset(RunConfig& cfg, const std::string& preset);

// Parses a config file; .toml uses the bundled TOML-subset reader, anything
// else is read as JSON. Unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);

// Hash of the canonical JSON form; names run directories and stamps
// checkpoints.
std::string config_hash(const RunConfig& cfg);

// Minimal TOML reader: [dotted.sections], `key = value` with integers,
// floats, booleans, double-quoted strings and flat arrays, # comments.
nlohmann::json parse_toml_subset(const std::string& text);

}  // namespace fend::cfg
