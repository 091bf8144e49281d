#include "fend/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "fend/errors.hpp"
#include "json.hpp"

namespace fend::eval {

SampleMetrics min_ade_fde(const pred::PredictionSet& pred,
                          const std::vector<traj::Point>& gt) {
  if (gt.size() != pred.t_pred || pred.heads == 0) {
    throw ContractError("min_ade_fde: shape mismatch");
  }
  SampleMetrics m{std::numeric_limits<double>::max(),
                  std::numeric_limits<double>::max()};
  for (std::size_t k = 0; k < pred.heads; ++k) {
    double ade = 0.0;
    for (std::size_t s = 0; s < pred.t_pred; ++s) {
      const double dx = pred.at(k, s, 0) - gt[s][0];
      const double dy = pred.at(k, s, 1) - gt[s][1];
      ade += std::sqrt(dx * dx + dy * dy);
    }
    ade /= static_cast<double>(pred.t_pred);
    const double fx = pred.at(k, pred.t_pred - 1, 0) - gt.back()[0];
    const double fy = pred.at(k, pred.t_pred - 1, 1) - gt.back()[1];
    const double fde = std::sqrt(fx * fx + fy * fy);
    m.min_ade = std::min(m.min_ade, ade);
    m.min_fde = std::min(m.min_fde, fde);
  }
  return m;
}

std::array<std::vector<std::size_t>, 5> bucket_indices(
    const std::vector<double>& baseline_fdes) {
  const std::size_t n = baseline_fdes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (baseline_fdes[a] != baseline_fdes[b]) return baseline_fdes[a] > baseline_fdes[b];
    return a < b;
  });
  std::array<std::vector<std::size_t>, 5> out;
  for (std::size_t p = 1; p <= 5; ++p) {
    const std::size_t count = std::min<std::size_t>(
        n, static_cast<std::size_t>(
               std::ceil(static_cast<double>(p * n) / 100.0)));
    out[p - 1].assign(order.begin(), order.begin() + count);
  }
  return out;
}

BucketReport bucket_by_baseline(const std::vector<double>& baseline_fdes,
                                const std::vector<SampleMetrics>& model_metrics) {
  if (baseline_fdes.size() != model_metrics.size() || baseline_fdes.empty()) {
    throw ContractError("bucket_by_baseline: sample sets mismatch");
  }
  const auto buckets = bucket_indices(baseline_fdes);
  const auto mean_of = [&](const std::vector<std::size_t>& idx) {
    BucketStats s;
    s.n = idx.size();
    for (const std::size_t i : idx) {
      s.min_ade += model_metrics[i].min_ade;
      s.min_fde += model_metrics[i].min_fde;
    }
    if (s.n > 0) {
      s.min_ade /= static_cast<double>(s.n);
      s.min_fde /= static_cast<double>(s.n);
    }
    return s;
  };
  BucketReport rep;
  for (std::size_t p = 0; p < 5; ++p) rep.top[p] = mean_of(buckets[p]);
  std::vector<bool> in_top5(baseline_fdes.size(), false);
  for (const std::size_t i : buckets[4]) in_top5[i] = true;
  std::vector<std::size_t> rest_idx, all_idx;
  for (std::size_t i = 0; i < baseline_fdes.size(); ++i) {
    all_idx.push_back(i);
    if (!in_top5[i]) rest_idx.push_back(i);
  }
  rep.rest = mean_of(rest_idx);
  rep.all = mean_of(all_idx);
  return rep;
}

std::vector<std::array<double, 2>> fde_cdf(const std::vector<double>& fdes,
                                           std::size_t n_bins) {
  if (fdes.empty()) throw ContractError("fde_cdf: empty input");
  if (n_bins < 1) throw ContractError("fde_cdf: n_bins must be >= 1");
  std::vector<double> sorted = fdes;
  std::sort(sorted.begin(), sorted.end());
  const double max = sorted.back();
  std::vector<std::array<double, 2>> out;
  out.reserve(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    // The last bin is pinned to max so rounding cannot drop the top sample.
    const double x = (n_bins == 1 || b == n_bins - 1)
                         ? max
                         : max * static_cast<double>(b) / static_cast<double>(n_bins - 1);
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
    const double f = static_cast<double>(it - sorted.begin()) /
                     static_cast<double>(sorted.size());
    out.push_back({x, f});
  }
  return out;
}

namespace {

double dist(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    acc += t * t;
  }
  return std::sqrt(acc);
}

}  // namespace

double silhouette_score(const cluster::FeatureMatrix& features,
                        const std::vector<int>& labels) {
  const std::size_t n = features.rows, d = features.cols;
  if (labels.size() != n) throw ContractError("silhouette: label count mismatch");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) throw ContractError("silhouette: need at least 2 labels");

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = groups[labels[i]];
    if (own.size() < 2) continue;  // singleton contributes 0
    double a = 0.0;
    for (const std::size_t j : own) {
      if (j != i) a += dist(features.row(i), features.row(j), d);
    }
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::max();
    for (const auto& [lab, members] : groups) {
      if (lab == labels[i]) continue;
      double m = 0.0;
      for (const std::size_t j : members) m += dist(features.row(i), features.row(j), d);
      b = std::min(b, m / static_cast<double>(members.size()));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

SeparationStats separation_stats(const cluster::FeatureMatrix& features,
                                 const std::vector<int>& labels) {
  const std::size_t n = features.rows, d = features.cols;
  if (labels.size() != n) throw ContractError("separation_stats: label count mismatch");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) throw ContractError("separation_stats: need at least 2 labels");

  SeparationStats out;
  std::vector<std::vector<double>> protos;
  for (const auto& [lab, members] : groups) {
    double intra = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        intra += dist(features.row(members[a]), features.row(members[b]), d);
        ++pairs;
      }
    }
    out.intra.push_back(pairs > 0 ? intra / static_cast<double>(pairs) : 0.0);
    std::vector<double> proto(d, 0.0);
    for (const std::size_t i : members) {
      for (std::size_t e = 0; e < d; ++e) proto[e] += features.row(i)[e];
    }
    for (double& v : proto) v /= static_cast<double>(members.size());
    protos.push_back(std::move(proto));
  }
  out.intra_mean = std::accumulate(out.intra.begin(), out.intra.end(), 0.0) /
                   static_cast<double>(out.intra.size());
  double inter = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < protos.size(); ++a) {
    for (std::size_t b = a + 1; b < protos.size(); ++b) {
      inter += dist(protos[a].data(), protos[b].data(), d);
      ++pairs;
    }
  }
  out.inter_mean = inter / static_cast<double>(pairs);
  out.ratio = out.intra_mean > 0.0 ? out.inter_mean / out.intra_mean
                                   : std::numeric_limits<double>::infinity();
  out.silhouette = silhouette_score(features, labels);
  return out;
}

std::vector<std::array<double, 2>> pca2d(const cluster::FeatureMatrix& features) {
  const std::size_t n = features.rows, d = features.cols;
  if (n == 0 || d == 0) throw ContractError("pca2d: empty features");
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < d; ++e) mean[e] += features.row(i)[e];
  }
  for (double& v : mean) v /= static_cast<double>(n);
  // Covariance (d x d).
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = features.row(i)[a] - mean[a];
      for (std::size_t b = 0; b < d; ++b) {
        cov[a * d + b] += xa * (features.row(i)[b] - mean[b]);
      }
    }
  }
  for (double& v : cov) v /= static_cast<double>(n);

  const auto power_iter = [&](const std::vector<double>* deflate) {
    std::vector<double> v(d, 0.0);
    v[0] = 1.0;
    if (d > 1) v[1] = 0.5;  // deterministic, not axis-aligned
    for (int it = 0; it < 200; ++it) {
      if (deflate) {
        double proj = std::inner_product(v.begin(), v.end(), deflate->begin(), 0.0);
        for (std::size_t e = 0; e < d; ++e) v[e] -= proj * (*deflate)[e];
      }
      std::vector<double> w(d, 0.0);
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) w[a] += cov[a * d + b] * v[b];
      }
      double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
      if (norm < 1e-300) break;
      for (std::size_t e = 0; e < d; ++e) v[e] = w[e] / norm;
    }
    if (deflate) {
      double proj = std::inner_product(v.begin(), v.end(), deflate->begin(), 0.0);
      for (std::size_t e = 0; e < d; ++e) v[e] -= proj * (*deflate)[e];
      double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      if (norm > 1e-300) {
        for (double& e : v) e /= norm;
      }
    }
    return v;
  };
  const std::vector<double> pc1 = power_iter(nullptr);
  const std::vector<double> pc2 = power_iter(&pc1);

  std::vector<std::array<double, 2>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = 0.0, y = 0.0;
    for (std::size_t e = 0; e < d; ++e) {
      const double c = features.row(i)[e] - mean[e];
      x += c * pc1[e];
      y += c * pc2[e];
    }
    out.push_back({x, y});
  }
  return out;
}

namespace {

std::string cell(const BucketStats& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f/%.4f", s.min_ade, s.min_fde);
  return buf;
}

}  // namespace

void save_bucket_csv(const std::vector<std::pair<std::string, BucketReport>>& rows,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "model,top1,top2,top3,top4,top5,rest,all\n";
  for (const auto& [name, rep] : rows) {
    out << name;
    for (int p = 0; p < 5; ++p) out << "," << cell(rep.top[p]);
    out << "," << cell(rep.rest) << "," << cell(rep.all) << "\n";
  }
}

void save_cdf_txt(const std::vector<std::array<double, 2>>& cdf,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  char buf[64];
  for (const auto& [x, f] : cdf) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f\n", x, f);
    out << buf;
  }
}

void save_separation_json(const SeparationStats& stats, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["intra_per_label"] = stats.intra;
  j["intra_mean"] = stats.intra_mean;
  j["inter_mean"] = stats.inter_mean;
  if (std::isfinite(stats.ratio)) {
    j["ratio"] = stats.ratio;
  } else {
    j["ratio"] = "+inf";
  }
  j["silhouette"] = stats.silhouette;
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

}  // namespace fend::eval
