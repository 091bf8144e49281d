#include "fend/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "fend/errors.hpp"
#include "json.hpp"

namespace fend::cluster {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    acc += t * t;
  }
  return acc;
}

// k-means++ seeding.
FeatureMatrix seed_centroids(const FeatureMatrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows, d = x.cols;
  FeatureMatrix c;
  c.rows = k;
  c.cols = d;
  c.data.resize(k * d);
  std::vector<double> dist2(n, std::numeric_limits<double>::max());
  std::size_t first = rng.below(n);
  std::copy_n(x.row(first), d, c.row(0));
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], sq_dist(x.row(i), c.row(j - 1), d));
      total += dist2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform01() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    std::copy_n(x.row(pick), d, c.row(j));
  }
  return c;
}

KmeansResult lloyd_run(const FeatureMatrix& x, std::size_t k, Rng& rng,
                       std::size_t max_iters) {
  const std::size_t n = x.rows, d = x.cols;
  KmeansResult res;
  res.centroids = seed_centroids(x, k, rng);
  res.assignments.assign(n, 0);

  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  double prev_inertia = std::numeric_limits<double>::max();
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Assignment step.
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      std::size_t bj = 0;
      for (std::size_t j = 0; j < k; ++j) {
        const double dd = sq_dist(x.row(i), res.centroids.row(j), d);
        if (dd < best) {
          best = dd;
          bj = j;
        }
      }
      res.assignments[i] = bj;
      inertia += best;
    }
    res.inertia = inertia;
    res.inertia_history.push_back(inertia);

    // Converged: assignments are consistent with the current centroids.
    if (inertia >= prev_inertia) break;
    prev_inertia = inertia;

    // Update step.
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = res.assignments[i];
      ++counts[j];
      const double* xi = x.row(i);
      double* s = sums.data() + j * d;
      for (std::size_t e = 0; e < d; ++e) s[e] += xi[e];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] == 0) {
        // Re-seed an empty cluster to the farthest point from its centroid.
        double far_d = -1.0;
        std::size_t far_i = 0;
        for (std::size_t i = 0; i < n; ++i) {
          double dd = sq_dist(x.row(i), res.centroids.row(res.assignments[i]), d);
          if (dd > far_d) {
            far_d = dd;
            far_i = i;
          }
        }
        std::copy_n(x.row(far_i), d, res.centroids.row(j));
        continue;
      }
      double* cj = res.centroids.row(j);
      const double inv = 1.0 / static_cast<double>(counts[j]);
      for (std::size_t e = 0; e < d; ++e) cj[e] = sums[j * d + e] * inv;
    }
  }
  return res;
}

}  // namespace

KmeansResult kmeans(const FeatureMatrix& features, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters, std::size_t restarts) {
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (features.rows < k) {
    throw ConfigError("kmeans: k=" + std::to_string(k) + " exceeds n=" +
                      std::to_string(features.rows));
  }
  Rng rng(seed);
  KmeansResult best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    Rng sub = rng.fork(r + 1);
    KmeansResult res = lloyd_run(features, k, sub, max_iters);
    if (!have || res.inertia < best.inertia) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

double density(const FeatureMatrix& member_features, const std::vector<double>& prototype,
               double alpha) {
  const std::size_t z = member_features.rows, d = member_features.cols;
  if (z < 1) throw ContractError("density: empty cluster");
  if (prototype.size() != d) throw DimensionError("density: prototype dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < z; ++i) {
    sum += std::sqrt(sq_dist(member_features.row(i), prototype.data(), d));
  }
  return sum / (static_cast<double>(z) * std::log(static_cast<double>(z) + alpha));
}

std::vector<double> clamp_densities(std::vector<double> densities) {
  if (densities.empty()) return densities;
  std::vector<double> sorted = densities;
  std::sort(sorted.begin(), sorted.end());
  const auto pct = [&](double q) {
    const double rank = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  const double lo = pct(0.10), hi = pct(0.90);
  constexpr double kFloor = 1e-9;
  for (double& v : densities) {
    v = std::clamp(v, lo, hi);
    if (v < kFloor) v = kFloor;
  }
  return densities;
}

ClusterModel build_hierarchy(const FeatureMatrix& features,
                             const std::vector<std::int64_t>& sample_ids,
                             const ClusterConfig& cfg, std::uint64_t seed) {
  if (features.rows != sample_ids.size()) {
    throw ContractError("build_hierarchy: sample id count mismatch");
  }
  if (cfg.levels.empty()) throw ConfigError("build_hierarchy: no levels configured");
  ClusterModel model;
  model.sample_ids = sample_ids;
  for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
    // Auto-scale cluster counts so small datasets keep >= ~5 members/cluster.
    std::size_t k = std::min(cfg.levels[li], std::max<std::size_t>(2, features.rows / 5));
    k = std::min(k, features.rows);
    // Seed per requested cluster count, not per level position: levels are
    // mutually independent and reordering them must not change any of them.
    const std::uint64_t level_seed =
        seed ^ (static_cast<std::uint64_t>(cfg.levels[li]) * 0x9e3779b97f4a7c15ULL);
    KmeansResult km = kmeans(features, k, level_seed, cfg.max_iters, cfg.restarts);

    Level level;
    level.k = k;
    level.centroids = std::move(km.centroids);
    level.assignments = std::move(km.assignments);
    level.member_counts.assign(k, 0);
    level.prototypes.rows = k;
    level.prototypes.cols = features.cols;
    level.prototypes.data.assign(k * features.cols, 0.0);
    for (std::size_t i = 0; i < features.rows; ++i) {
      const std::size_t j = level.assignments[i];
      ++level.member_counts[j];
      const double* xi = features.row(i);
      double* pj = level.prototypes.row(j);
      for (std::size_t e = 0; e < features.cols; ++e) pj[e] += xi[e];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (level.member_counts[j] == 0) continue;  // cannot happen after re-seed
      const double inv = 1.0 / static_cast<double>(level.member_counts[j]);
      double* pj = level.prototypes.row(j);
      for (std::size_t e = 0; e < features.cols; ++e) pj[e] *= inv;
    }
    std::vector<double> dens(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      if (level.member_counts[j] == 0) continue;  // clamped up to the floor below
      FeatureMatrix members;
      members.cols = features.cols;
      members.rows = level.member_counts[j];
      members.data.reserve(members.rows * members.cols);
      for (std::size_t i = 0; i < features.rows; ++i) {
        if (level.assignments[i] == j) {
          members.data.insert(members.data.end(), features.row(i),
                              features.row(i) + features.cols);
        }
      }
      std::vector<double> proto(level.prototypes.row(j),
                                level.prototypes.row(j) + features.cols);
      dens[j] = density(members, proto, cfg.alpha);
    }
    level.densities = clamp_densities(std::move(dens));
    model.levels.push_back(std::move(level));
  }
  return model;
}

namespace {

nlohmann::ordered_json matrix_to_json(const FeatureMatrix& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  j["data"] = m.data;
  return j;
}

FeatureMatrix matrix_from_json(const nlohmann::json& j) {
  FeatureMatrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols) throw FormatError("cluster json: bad matrix");
  return m;
}

}  // namespace

void save_cluster_json(const ClusterModel& model, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "fend-clusters";
  j["version"] = 1;
  j["sample_ids"] = model.sample_ids;
  nlohmann::ordered_json levels = nlohmann::ordered_json::array();
  for (const Level& l : model.levels) {
    nlohmann::ordered_json lj;
    lj["k"] = l.k;
    lj["centroids"] = matrix_to_json(l.centroids);
    lj["assignments"] = l.assignments;
    lj["prototypes"] = matrix_to_json(l.prototypes);
    lj["densities"] = l.densities;
    lj["member_counts"] = l.member_counts;
    levels.push_back(std::move(lj));
  }
  j["levels"] = std::move(levels);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

ClusterModel load_cluster_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "fend-clusters") {
    throw FormatError(path.string() + ": not a fend-clusters file");
  }
  ClusterModel model;
  model.sample_ids = j.at("sample_ids").get<std::vector<std::int64_t>>();
  for (const auto& lj : j.at("levels")) {
    Level l;
    l.k = lj.at("k").get<std::size_t>();
    l.centroids = matrix_from_json(lj.at("centroids"));
    l.assignments = lj.at("assignments").get<std::vector<std::size_t>>();
    l.prototypes = matrix_from_json(lj.at("prototypes"));
    l.densities = lj.at("densities").get<std::vector<double>>();
    l.member_counts = lj.at("member_counts").get<std::vector<std::size_t>>();
    model.levels.push_back(std::move(l));
  }
  return model;
}

void save_assignments_csv(const ClusterModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "sample_id,level,cluster\n";
  for (std::size_t li = 0; li < model.levels.size(); ++li) {
    const Level& l = model.levels[li];
    for (std::size_t i = 0; i < l.assignments.size(); ++i) {
      out << model.sample_ids[i] << "," << li << "," << l.assignments[i] << "\n";
    }
  }
}

}  // namespace fend::cluster
