#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "fend/cluster.hpp"
#include "fend/eval.hpp"
#include "fend/pcl.hpp"
#include "fend/predictor.hpp"
#include "fend/trajdata.hpp"

namespace fend::train {

struct TrainConfig {
  std::size_t epochs = 600;
  std::size_t warmup_epochs = 300;
  std::size_t batch_size = 256;  // auto-capped at the dataset size
  double lr = 0.01;
  double lr_decay = 0.001;       // lr(e) = lr * exp(-lr_decay * e)
  double a_initial = 50.0;
  double a_late = 0.2;
  std::size_t a_switch_epoch = 100;  // counted from warm-up end
  double theta = 0.2;
  std::uint64_t seed = 1;
  bool use_pcl = true;
  bool use_hyper = true;
  bool future_enhanced = true;  // which clustering the pipeline feeds in
  std::size_t val_every = 1;    // epochs between validation-metric records
  pred::PredictorConfig predictor;
  pcl::PCLConfig pcl;
};

// Scales the paper schedule down for desk-size datasets, preserving the
// stage ratios (3 stages of warm-up out of 6; the PCL weight drops after one
// further stage).
void apply_desk_schedule(TrainConfig& cfg, std::size_t n_train);

// Two-step PCL weight schedule; `epochs_after_warmup` counts from gate freeze.
double a_weight(const TrainConfig& cfg, std::size_t epochs_after_warmup);
double lr_at(const TrainConfig& cfg, std::size_t epoch);
std::size_t k_winners_at(const TrainConfig& cfg, std::size_t epoch);

// Per-train-sample hardness gate, frozen at warm-up end.
struct GateMask {
  std::vector<bool> active;  // by train index
  double theta = 0.0;
  bool frozen = false;

  std::size_t n_active() const {
    std::size_t c = 0;
    for (const bool b : active) c += b;
    return c;
  }
};

// EWTA loss per train sample under the given parameters; active where the
// loss exceeds theta.
GateMask compute_gate(const traj::DatasetSplit& split, const pred::PredictorParams& params,
                      double theta, std::size_t k_winners, bool use_hyper);

// Projected (contrastive-space) features of the given samples.
cluster::FeatureMatrix project_features(const pred::PredictorParams& params,
                                        const std::vector<traj::TrajectorySample>& samples);

struct EpochRecord {
  std::size_t epoch = 0;
  double ewta_loss = 0.0;
  double pcl_loss = 0.0;
  double a = 0.0;
  double lr = 0.0;
  std::size_t k_winners = 0;
  bool has_val = false;
  eval::BucketReport val;  // self-bucketed test metrics
};

struct TrainResult {
  pred::PredictorParams params;
  pred::PredictorParams warmup_params;  // snapshot at gate freeze
  GateMask gate;
  std::vector<EpochRecord> log;
};

// One batch of the composite objective. Returns the loss node plus the plain
// values of both components; `gate` == nullptr or an unfrozen mask means
// warm-up (prediction loss only). Inactive instances are excluded from the
// contrastive outer sums but still serve as in-batch negatives.
struct BatchLoss {
  num::Tape::Id loss;
  double ewta_value = 0.0;
  double pcl_value = 0.0;
};

BatchLoss total_loss(num::Tape& t, const pred::PredictorIds& ids, const TrainConfig& cfg,
                     const std::vector<const traj::TrajectorySample*>& batch,
                     const std::vector<std::size_t>& bank_rows,
                     const pcl::FeatureBank* bank, const GateMask* gate,
                     const std::vector<bool>* batch_active, std::size_t epoch,
                     std::vector<double>* per_sample_ewta,
                     pred::EncodeOut* encode_out);

// Full schedule: warm-up, gate freeze, gated PCL with bank updates and
// per-epoch prototype refresh, EWTA stage evolution, exponential lr decay.
// Deterministic per cfg.seed.
TrainResult train_fend(const traj::DatasetSplit& split,
                       const cluster::ClusterModel& cluster_model, const TrainConfig& cfg);

void save_run_log(const std::vector<EpochRecord>& log, const GateMask& gate,
                  const std::filesystem::path& path);

}  // namespace fend::train
