#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "fend/cluster.hpp"
#include "fend/predictor.hpp"
#include "fend/trajdata.hpp"

namespace fend::eval {

struct SampleMetrics {
  double min_ade = 0.0;
  double min_fde = 0.0;
};

// Per-metric minimum over heads (the best-ADE head and the best-FDE head are
// picked independently).
SampleMetrics min_ade_fde(const pred::PredictionSet& pred,
                          const std::vector<traj::Point>& gt);

struct BucketStats {
  double min_ade = 0.0;
  double min_fde = 0.0;
  std::size_t n = 0;
};

// Cumulative top-1%..5% buckets by baseline FDE, plus rest and all.
struct BucketReport {
  std::array<BucketStats, 5> top;
  BucketStats rest;
  BucketStats all;
};

// Index sets of the cumulative top-P% buckets (P = 1..5), ranked by baseline
// FDE descending (ties broken by index). Bucket sizes use ceil(P*n/100).
std::array<std::vector<std::size_t>, 5> bucket_indices(
    const std::vector<double>& baseline_fdes);

// Mean model metrics per bucket; membership depends only on the baseline.
BucketReport bucket_by_baseline(const std::vector<double>& baseline_fdes,
                                const std::vector<SampleMetrics>& model_metrics);

// Empirical CDF sampled at n_bins equi-spaced values from 0 to max(fdes).
std::vector<std::array<double, 2>> fde_cdf(const std::vector<double>& fdes,
                                           std::size_t n_bins);

struct SeparationStats {
  std::vector<double> intra;  // per present label, mean pairwise distance
  double intra_mean = 0.0;
  double inter_mean = 0.0;    // mean pairwise distance between label prototypes
  double ratio = 0.0;         // inter/intra, +inf when intra == 0
  double silhouette = 0.0;
};

SeparationStats separation_stats(const cluster::FeatureMatrix& features,
                                 const std::vector<int>& labels);

double silhouette_score(const cluster::FeatureMatrix& features,
                        const std::vector<int>& labels);

// Projection onto the top-2 principal components (deterministic power
// iteration); stand-in for the paper-style 2D embedding plots.
std::vector<std::array<double, 2>> pca2d(const cluster::FeatureMatrix& features);

// Table-style CSV: one row per model, cells "ade/fde" per bucket.
void save_bucket_csv(const std::vector<std::pair<std::string, BucketReport>>& rows,
                     const std::filesystem::path& path);
void save_cdf_txt(const std::vector<std::array<double, 2>>& cdf,
                  const std::filesystem::path& path);
void save_separation_json(const SeparationStats& stats, const std::filesystem::path& path);

}  // namespace fend::eval
