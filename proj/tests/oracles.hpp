#pragma once

// Independent brute-force reference implementations. These deliberately share
// no code with the library: plain scalar loops, direct formula transcription.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace oracle {

// Triple-loop matrix product: a is m x k, b is k x n, both row-major.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      c[i * n + j] = acc;
    }
  }
  return c;
}

// Instance-wise contrastive term, scalar transcription. feats: r rows of
// dimension d; positives share a cluster id; denominator includes j == i.
inline double loss_instance(const std::vector<std::vector<double>>& feats,
                            const std::vector<std::size_t>& clusters, double tau,
                            const std::vector<bool>* include = nullptr) {
  const std::size_t r = feats.size();
  const auto dot = [&](std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t e = 0; e < feats[i].size(); ++e) acc += feats[i][e] * feats[j][e];
    return acc;
  };
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (include && !(*include)[i]) continue;
    std::vector<std::size_t> positives;
    for (std::size_t j = 0; j < r; ++j) {
      if (j != i && clusters[j] == clusters[i]) positives.push_back(j);
    }
    if (positives.empty()) continue;
    double denom = 0.0;
    for (std::size_t j = 0; j < r; ++j) denom += std::exp(dot(i, j) / tau);
    double inner = 0.0;
    for (const std::size_t j : positives) {
      inner += std::log(std::exp(dot(i, j) / tau) / denom);
    }
    loss -= inner / static_cast<double>(positives.size());
  }
  return loss;
}

// Instance-prototype term, scalar transcription. prototypes[m] has N_m rows;
// densities[m] matches; assignment[m][i] names sample i's cluster at level m.
inline double loss_proto(const std::vector<std::vector<double>>& feats,
                         const std::vector<std::vector<std::vector<double>>>& prototypes,
                         const std::vector<std::vector<double>>& densities,
                         const std::vector<std::vector<std::size_t>>& assignment,
                         const std::vector<bool>* include = nullptr) {
  const std::size_t r = feats.size();
  const std::size_t m_levels = prototypes.size();
  const auto dotp = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e) acc += a[e] * b[e];
    return acc;
  };
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (include && !(*include)[i]) continue;
    for (std::size_t m = 0; m < m_levels; ++m) {
      const std::size_t s = assignment[m][i];
      double denom = 0.0;
      for (std::size_t j = 0; j < prototypes[m].size(); ++j) {
        denom += std::exp(dotp(feats[i], prototypes[m][j]) / densities[m][j]);
      }
      loss -= std::log(std::exp(dotp(feats[i], prototypes[m][s]) / densities[m][s]) / denom);
    }
  }
  return loss / static_cast<double>(m_levels);
}

// Cluster density, direct transcription of the concentration formula.
inline double density(const std::vector<std::vector<double>>& members,
                      const std::vector<double>& prototype, double alpha) {
  double sum = 0.0;
  for (const auto& v : members) {
    double sq = 0.0;
    for (std::size_t e = 0; e < v.size(); ++e) {
      const double t = v[e] - prototype[e];
      sq += t * t;
    }
    sum += std::sqrt(sq);
  }
  const double z = static_cast<double>(members.size());
  return sum / (z * std::log(z + alpha));
}

// EWTA: sort heads by ADE, average the MSE of the top k.
// pred[k][t] = (x, y); gt[t] = (x, y).
inline double ewta(const std::vector<std::vector<std::pair<double, double>>>& pred,
                   const std::vector<std::pair<double, double>>& gt, std::size_t k_winners) {
  const std::size_t heads = pred.size();
  const std::size_t t = gt.size();
  std::vector<std::pair<double, double>> ade_mse;
  for (std::size_t k = 0; k < heads; ++k) {
    double ade = 0.0, mse = 0.0;
    for (std::size_t s = 0; s < t; ++s) {
      const double dx = pred[k][s].first - gt[s].first;
      const double dy = pred[k][s].second - gt[s].second;
      ade += std::sqrt(dx * dx + dy * dy);
      mse += dx * dx + dy * dy;
    }
    ade_mse.push_back({ade / t, mse / t});
  }
  std::sort(ade_mse.begin(), ade_mse.end());
  double loss = 0.0;
  for (std::size_t k = 0; k < k_winners; ++k) loss += ade_mse[k].second;
  return loss / static_cast<double>(k_winners);
}

// Per-head loop for min ADE / min FDE, minima taken independently.
inline std::pair<double, double> min_ade_fde(
    const std::vector<std::vector<std::pair<double, double>>>& pred,
    const std::vector<std::pair<double, double>>& gt) {
  double best_ade = 1e300, best_fde = 1e300;
  for (const auto& head : pred) {
    double ade = 0.0;
    for (std::size_t s = 0; s < gt.size(); ++s) {
      const double dx = head[s].first - gt[s].first;
      const double dy = head[s].second - gt[s].second;
      ade += std::sqrt(dx * dx + dy * dy);
    }
    ade /= static_cast<double>(gt.size());
    const double fx = head.back().first - gt.back().first;
    const double fy = head.back().second - gt.back().second;
    best_ade = std::min(best_ade, ade);
    best_fde = std::min(best_fde, std::sqrt(fx * fx + fy * fy));
  }
  return {best_ade, best_fde};
}

// Sort-based empirical CDF at x: fraction of values <= x.
inline double cdf_at(std::vector<double> values, double x) {
  std::sort(values.begin(), values.end());
  std::size_t count = 0;
  for (const double v : values) {
    if (v <= x) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(values.size());
}

}  // namespace oracle
