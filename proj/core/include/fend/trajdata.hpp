#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fend/rng.hpp"

namespace fend::traj {

using Point = std::array<double, 2>;

// Rigid transform applied during normalization: raw = R(rot) * p + (tx, ty).
struct Transform {
  double tx = 0.0;
  double ty = 0.0;
  double rot = 0.0;
};

// One windowed sample in normalized coordinates: the last observed point sits
// at the origin and the last observed velocity points along +x (rotation 0
// when that velocity is zero).
struct TrajectorySample {
  std::int64_t sample_id = 0;
  std::vector<Point> obs;   // T_obs points
  std::vector<Point> fut;   // T_pred points
  Transform transform;
  int pattern_label = -1;   // 0 head, 1..4 tail patterns, -1 unknown
};

struct DatasetSplit {
  std::vector<TrajectorySample> train;
  std::vector<TrajectorySample> test;
  std::size_t t_obs = 8;
  std::size_t t_pred = 12;
  double dt = 0.4;
};

// Contiguous constant-stride run of one agent's observations.
struct RawTrack {
  std::int64_t agent_id = 0;
  std::vector<std::int64_t> frames;
  std::vector<Point> points;
};

// Normalizes a raw window in place: translation of the final observed point
// to the origin, then rotation aligning the last observed velocity with +x.
TrajectorySample normalize_window(const std::vector<Point>& raw_obs,
                                  const std::vector<Point>& raw_fut,
                                  std::int64_t sample_id, int pattern_label = -1);

// Inverse transform of a predicted (or stored) normalized track.
std::vector<Point> denormalize(const TrajectorySample& sample,
                               const std::vector<Point>& pred);

std::vector<Point> raw_obs(const TrajectorySample& sample);
std::vector<Point> raw_fut(const TrajectorySample& sample);

// Parses whitespace-separated rows `frame_id agent_id x y`, groups rows into
// constant-stride tracks per agent (a stride change starts a new track),
// windows each track with stride 1 and normalizes every window. All samples
// land in `train`; use split_holdout for a test split.
DatasetSplit load_ethucy_text(const std::filesystem::path& path, std::size_t t_obs,
                              std::size_t t_pred, double dt = 0.4);

// Moves a seeded random fraction of train samples to test.
void split_holdout(DatasetSplit& split, double test_fraction, std::uint64_t seed);

struct SynthConfig {
  std::size_t n = 1000;
  double tail_fraction = 0.1;
  std::uint64_t seed = 1;
  std::size_t t_obs = 8;
  std::size_t t_pred = 12;
  double dt = 0.4;
  double noise_sigma = 0.05;
};

// Synthetic long-tail set: constant-velocity head samples plus four rare
// maneuver patterns (turn / accelerate / brake-to-stop / reverse), stratified
// 80/20 into train/test. Deterministic per seed.
DatasetSplit synth_longtail(const SynthConfig& cfg);

// Dataset JSON (schema "fend-dataset" v1, meta block + samples array with
// deterministic field order).
void save_dataset_json(const DatasetSplit& split, const std::filesystem::path& path,
                       const std::string& source);
DatasetSplit load_dataset_json(const std::filesystem::path& path);

}  // namespace fend::traj
