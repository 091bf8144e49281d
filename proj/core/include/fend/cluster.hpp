#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fend/rng.hpp"

namespace fend::cluster {

// Row-major feature matrix view: n rows of dimension d.
struct FeatureMatrix {
  std::vector<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double* row(std::size_t i) { return data.data() + i * cols; }
};

struct ClusterConfig {
  std::vector<std::size_t> levels = {20, 50, 100};
  std::size_t max_iters = 100;
  std::size_t restarts = 3;
  double alpha = 10.0;  // density smoothing factor
};

struct KmeansResult {
  FeatureMatrix centroids;            // k x d
  std::vector<std::size_t> assignments;  // n
  double inertia = 0.0;
  std::vector<double> inertia_history;   // per Lloyd iteration of the winning run
};

// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs by
// inertia; empty clusters are re-seeded to the farthest point. Deterministic
// per seed.
KmeansResult kmeans(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters = 100, std::size_t restarts = 3);

struct Level {
  std::size_t k = 0;
  FeatureMatrix centroids;               // k x d (Lloyd output)
  std::vector<std::size_t> assignments;  // per input row
  FeatureMatrix prototypes;              // k x d (arithmetic means of members)
  std::vector<double> densities;         // clamped phi per cluster
  std::vector<std::size_t> member_counts;
};

struct ClusterModel {
  std::vector<Level> levels;
  std::vector<std::int64_t> sample_ids;  // row -> sample id
};

// phi = sum_z ||v_z - c||_2 / (Z * ln(Z + alpha)), before any clamping.
double density(const FeatureMatrix& member_features, const std::vector<double>& prototype,
               double alpha);

// Clamps densities to the [10th, 90th] percentile of the level, with a small
// positive floor so singleton clusters cannot zero the contrastive
// temperature.
std::vector<double> clamp_densities(std::vector<double> densities);

// Independent kmeans per level; level counts are auto-scaled down to n/5 on
// small inputs. `sample_ids[i]` names row i.
ClusterModel build_hierarchy(const FeatureMatrix& features,
                             const std::vector<std::int64_t>& sample_ids,
                             const ClusterConfig& cfg, std::uint64_t seed);

void save_cluster_json(const ClusterModel& model, const std::filesystem::path& path);
ClusterModel load_cluster_json(const std::filesystem::path& path);
void save_assignments_csv(const ClusterModel& model, const std::filesystem::path& path);

}  // namespace fend::cluster
