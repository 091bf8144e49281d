#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "fend/cluster.hpp"
#include "fend/tape.hpp"

namespace fend::pcl {

using num::Tape;

struct PCLConfig {
  double tau = 0.1;            // instance-term temperature
  double momentum_beta = 0.9;  // EMA coefficient for bank features
  std::size_t refresh_every = 1;  // epochs between prototype/density refresh
  double alpha = 10.0;            // density smoothing factor
};

// Prototypes and densities of one clustering level, in the projected space.
struct ProtoLevel {
  cluster::FeatureMatrix prototypes;     // k x d
  std::vector<double> densities;         // k, clamped, > 0
  std::vector<std::size_t> assignment;   // per bank row
  std::size_t k = 0;
};

// Momentum-updated store of per-sample projected features plus the per-level
// prototypes/densities recomputed from it. Rows cover exactly the training
// split; pseudo labels come from the offline cluster model and stay fixed.
class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(const cluster::ClusterModel& labels, std::size_t dim, double alpha);

  std::size_t rows() const { return features_.rows; }
  std::size_t dim() const { return features_.cols; }
  std::size_t num_levels() const { return levels_.size(); }
  std::size_t finest_level() const { return finest_; }

  std::size_t row_of(std::int64_t sample_id) const;
  std::size_t assignment(std::size_t level, std::size_t row) const;
  const ProtoLevel& level(std::size_t m) const { return levels_[m]; }
  const cluster::FeatureMatrix& features() const { return features_; }

  // Overwrites all stored features (unit-normalizing each row) and refreshes
  // prototypes/densities. Row order must match the cluster model.
  void init_features(const cluster::FeatureMatrix& feats);

  // v' <- normalize(beta * v' + (1 - beta) * v_new) for the given samples.
  void update(const std::vector<std::int64_t>& sample_ids,
              const cluster::FeatureMatrix& new_feats, double beta);

  // Recomputes per-level prototypes and clamped densities from the bank.
  void refresh();

 private:
  cluster::FeatureMatrix features_;  // unit rows
  std::vector<ProtoLevel> levels_;
  std::unordered_map<std::int64_t, std::size_t> row_of_;
  std::vector<std::int64_t> ids_;
  double alpha_ = 10.0;
  std::size_t finest_ = 0;
};

// Affine layer followed by L2 row normalization: [r x in] -> unit [r x out].
Tape::Id project(Tape& t, Tape::Id features, Tape::Id w, Tape::Id b);

// Instance-wise contrastive term over one batch of unit features
// [r x d]. Positives share the finest-level cluster; the softmax denominator
// runs over the whole batch including self. `include`, when given, drops an
// instance's outer term (it still serves as a negative).
Tape::Id loss_instance(Tape& t, Tape::Id batch_feats,
                       const std::vector<std::size_t>& batch_clusters, double tau,
                       const std::vector<bool>* include = nullptr);

// Instance-prototype term: -(1/M) sum_i sum_m log softmax of v_i . c/phi over
// the level's prototypes. Prototypes and densities are constants (no gradient
// into the bank). `batch_assign[m][i]` is instance i's cluster at level m.
Tape::Id loss_proto_levels(Tape& t, Tape::Id batch_feats,
                           const std::vector<const ProtoLevel*>& levels,
                           const std::vector<std::vector<std::size_t>>& batch_assign,
                           const std::vector<bool>* include = nullptr);

// Same, resolving assignments through the bank rows.
Tape::Id loss_proto(Tape& t, Tape::Id batch_feats,
                    const std::vector<std::size_t>& batch_rows, const FeatureBank& bank,
                    const std::vector<bool>* include = nullptr);

// Both terms.
Tape::Id protonce(Tape& t, Tape::Id batch_feats,
                  const std::vector<std::size_t>& batch_rows, const FeatureBank& bank,
                  const PCLConfig& cfg, const std::vector<bool>* include = nullptr);

}  // namespace fend::pcl
