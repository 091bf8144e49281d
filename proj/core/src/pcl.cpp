#include "fend/pcl.hpp"

#include <algorithm>
#include <cmath>

#include "fend/errors.hpp"

namespace fend::pcl {

namespace {

void normalize_row(double* v, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += v[i] * v[i];
  const double inv = 1.0 / std::sqrt(s + 1e-24);
  for (std::size_t i = 0; i < d; ++i) v[i] *= inv;
}

}  // namespace

FeatureBank::FeatureBank(const cluster::ClusterModel& labels, std::size_t dim,
                         double alpha)
    : alpha_(alpha) {
  if (labels.levels.empty()) throw ContractError("FeatureBank: cluster model has no levels");
  const std::size_t n = labels.sample_ids.size();
  features_.rows = n;
  features_.cols = dim;
  features_.data.assign(n * dim, 0.0);
  ids_ = labels.sample_ids;
  for (std::size_t i = 0; i < n; ++i) row_of_[ids_[i]] = i;

  std::size_t finest_k = 0;
  for (std::size_t m = 0; m < labels.levels.size(); ++m) {
    ProtoLevel lv;
    lv.k = labels.levels[m].k;
    lv.assignment = labels.levels[m].assignments;
    if (lv.assignment.size() != n) {
      throw ContractError("FeatureBank: level assignment count mismatch");
    }
    lv.prototypes.rows = lv.k;
    lv.prototypes.cols = dim;
    lv.prototypes.data.assign(lv.k * dim, 0.0);
    lv.densities.assign(lv.k, 1.0);
    if (lv.k >= finest_k) {
      finest_k = lv.k;
      finest_ = m;
    }
    levels_.push_back(std::move(lv));
  }
}

std::size_t FeatureBank::row_of(std::int64_t sample_id) const {
  const auto it = row_of_.find(sample_id);
  if (it == row_of_.end()) {
    throw ContractError("FeatureBank: unknown sample id " + std::to_string(sample_id));
  }
  return it->second;
}

std::size_t FeatureBank::assignment(std::size_t level, std::size_t row) const {
  if (level >= levels_.size() || row >= rows()) {
    throw ContractError("FeatureBank: assignment lookup out of range");
  }
  return levels_[level].assignment[row];
}

void FeatureBank::init_features(const cluster::FeatureMatrix& feats) {
  if (feats.rows != features_.rows || feats.cols != features_.cols) {
    throw ContractError("FeatureBank: init shape mismatch");
  }
  features_.data = feats.data;
  for (std::size_t i = 0; i < features_.rows; ++i) {
    normalize_row(features_.row(i), features_.cols);
  }
  refresh();
}

void FeatureBank::update(const std::vector<std::int64_t>& sample_ids,
                         const cluster::FeatureMatrix& new_feats, double beta) {
  if (sample_ids.size() != new_feats.rows || new_feats.cols != features_.cols) {
    throw ContractError("FeatureBank: update shape mismatch");
  }
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    const std::size_t r = row_of(sample_ids[i]);
    double* v = features_.row(r);
    const double* nv = new_feats.row(i);
    for (std::size_t e = 0; e < features_.cols; ++e) {
      v[e] = beta * v[e] + (1.0 - beta) * nv[e];
    }
    normalize_row(v, features_.cols);
  }
}

void FeatureBank::refresh() {
  const std::size_t d = features_.cols;
  for (ProtoLevel& lv : levels_) {
    std::fill(lv.prototypes.data.begin(), lv.prototypes.data.end(), 0.0);
    std::vector<std::size_t> counts(lv.k, 0);
    for (std::size_t i = 0; i < features_.rows; ++i) {
      const std::size_t j = lv.assignment[i];
      ++counts[j];
      const double* vi = features_.row(i);
      double* pj = lv.prototypes.row(j);
      for (std::size_t e = 0; e < d; ++e) pj[e] += vi[e];
    }
    for (std::size_t j = 0; j < lv.k; ++j) {
      if (counts[j] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[j]);
      double* pj = lv.prototypes.row(j);
      for (std::size_t e = 0; e < d; ++e) pj[e] *= inv;
    }
    std::vector<double> dens(lv.k, 0.0);
    for (std::size_t j = 0; j < lv.k; ++j) {
      if (counts[j] == 0) continue;
      double sum = 0.0;
      for (std::size_t i = 0; i < features_.rows; ++i) {
        if (lv.assignment[i] != j) continue;
        const double* vi = features_.row(i);
        const double* pj = lv.prototypes.row(j);
        double sq = 0.0;
        for (std::size_t e = 0; e < d; ++e) {
          const double t = vi[e] - pj[e];
          sq += t * t;
        }
        sum += std::sqrt(sq);
      }
      dens[j] = sum / (static_cast<double>(counts[j]) *
                       std::log(static_cast<double>(counts[j]) + alpha_));
    }
    lv.densities = cluster::clamp_densities(std::move(dens));
  }
}

Tape::Id project(Tape& t, Tape::Id features, Tape::Id w, Tape::Id b) {
  const Tape::Id affine = t.linear(features, w, b);
  const Tape::Id sq = t.mul(affine, affine);
  const Tape::Id norms = t.sqrt(t.add_const(t.row_sum(sq), 1e-24));
  return t.div_rows(affine, norms);
}

Tape::Id loss_instance(Tape& t, Tape::Id batch_feats,
                       const std::vector<std::size_t>& batch_clusters, double tau,
                       const std::vector<bool>* include) {
  const std::size_t r = t.val(batch_feats).dim(0);
  if (r < 2) throw ContractError("loss_instance: batch size must be >= 2");
  if (batch_clusters.size() != r) {
    throw ContractError("loss_instance: cluster labels count mismatch");
  }
  if (include && include->size() != r) {
    throw ContractError("loss_instance: include mask size mismatch");
  }
  if (tau <= 0.0) throw ContractError("loss_instance: tau must be positive");

  // logits[i][j] = v_i . v_j / tau, denominator spans the full batch (self
  // included); the positive pairs pick out same-cluster j != i.
  num::Tensor w_lse({r});
  num::Tensor w_logit({r, r});
  bool any = false;
  for (std::size_t i = 0; i < r; ++i) {
    if (include && !(*include)[i]) continue;
    std::size_t n_pos = 0;
    for (std::size_t j = 0; j < r; ++j) {
      if (j != i && batch_clusters[j] == batch_clusters[i]) ++n_pos;
    }
    if (n_pos == 0) continue;
    any = true;
    w_lse[i] = 1.0;
    const double wp = -1.0 / static_cast<double>(n_pos);
    for (std::size_t j = 0; j < r; ++j) {
      if (j != i && batch_clusters[j] == batch_clusters[i]) {
        w_logit.at2(i, j) = wp;
      }
    }
  }
  if (!any) return t.constant(num::Tensor::scalar(0.0));

  const Tape::Id logits = t.scale(t.matmul_nt(batch_feats, batch_feats), 1.0 / tau);
  const Tape::Id lse = t.lse_rows(logits);
  return t.add(t.weighted_sum(lse, std::move(w_lse)),
               t.weighted_sum(logits, std::move(w_logit)));
}

Tape::Id loss_proto_levels(Tape& t, Tape::Id batch_feats,
                           const std::vector<const ProtoLevel*>& levels,
                           const std::vector<std::vector<std::size_t>>& batch_assign,
                           const std::vector<bool>* include) {
  const std::size_t r = t.val(batch_feats).dim(0);
  const std::size_t d = t.val(batch_feats).dim(1);
  if (batch_assign.size() != levels.size()) {
    throw ContractError("loss_proto: assignment level count mismatch");
  }
  if (include && include->size() != r) {
    throw ContractError("loss_proto: include mask size mismatch");
  }
  const std::size_t m_levels = levels.size();
  if (m_levels == 0) return t.constant(num::Tensor::scalar(0.0));
  const double inv_m = 1.0 / static_cast<double>(m_levels);

  Tape::Id total = Tape::kNone;
  for (std::size_t m = 0; m < m_levels; ++m) {
    const ProtoLevel& lv = *levels[m];
    if (batch_assign[m].size() != r) {
      throw ContractError("loss_proto: assignment count mismatch at level " +
                          std::to_string(m));
    }
    // Constant [k x d] matrix with rows c_j / phi_j.
    num::Tensor cw({lv.k, d});
    for (std::size_t j = 0; j < lv.k; ++j) {
      const double inv_phi = 1.0 / lv.densities[j];
      const double* pj = lv.prototypes.row(j);
      for (std::size_t e = 0; e < d; ++e) {
        cw.at2(j, e) = pj[e] * inv_phi;
      }
    }
    num::Tensor w_lse({r});
    num::Tensor w_logit({r, lv.k});
    bool any = false;
    for (std::size_t i = 0; i < r; ++i) {
      if (include && !(*include)[i]) continue;
      const std::size_t s = batch_assign[m][i];
      if (s >= lv.k) throw ContractError("loss_proto: assignment out of range");
      w_lse[i] = inv_m;
      w_logit.at2(i, s) = -inv_m;
      any = true;
    }
    if (!any) continue;
    const Tape::Id logits = t.matmul_nt(batch_feats, t.constant(std::move(cw)));
    const Tape::Id lse = t.lse_rows(logits);
    const Tape::Id term = t.add(t.weighted_sum(lse, std::move(w_lse)),
                                t.weighted_sum(logits, std::move(w_logit)));
    total = total == Tape::kNone ? term : t.add(total, term);
  }
  if (total == Tape::kNone) return t.constant(num::Tensor::scalar(0.0));
  return total;
}

Tape::Id loss_proto(Tape& t, Tape::Id batch_feats,
                    const std::vector<std::size_t>& batch_rows, const FeatureBank& bank,
                    const std::vector<bool>* include) {
  const std::size_t r = t.val(batch_feats).dim(0);
  if (batch_rows.size() != r) throw ContractError("loss_proto: batch rows count mismatch");
  std::vector<const ProtoLevel*> levels;
  std::vector<std::vector<std::size_t>> batch_assign;
  for (std::size_t m = 0; m < bank.num_levels(); ++m) {
    levels.push_back(&bank.level(m));
    std::vector<std::size_t> assign(r);
    for (std::size_t i = 0; i < r; ++i) {
      if (batch_rows[i] >= bank.rows()) {
        throw ContractError("loss_proto: bank row out of range");
      }
      assign[i] = bank.assignment(m, batch_rows[i]);
    }
    batch_assign.push_back(std::move(assign));
  }
  return loss_proto_levels(t, batch_feats, levels, batch_assign, include);
}

Tape::Id protonce(Tape& t, Tape::Id batch_feats,
                  const std::vector<std::size_t>& batch_rows, const FeatureBank& bank,
                  const PCLConfig& cfg, const std::vector<bool>* include) {
  std::vector<std::size_t> finest_clusters(batch_rows.size());
  for (std::size_t i = 0; i < batch_rows.size(); ++i) {
    finest_clusters[i] = bank.assignment(bank.finest_level(), batch_rows[i]);
  }
  const Tape::Id li =
      loss_instance(t, batch_feats, finest_clusters, cfg.tau, include);
  const Tape::Id lp = loss_proto(t, batch_feats, batch_rows, bank, include);
  return t.add(li, lp);
}

}  // namespace fend::pcl
