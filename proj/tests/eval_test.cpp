#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fend/errors.hpp"
#include "fend/eval.hpp"
#include "fend/kalman.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace fend;

namespace {

pred::PredictionSet from_heads(const std::vector<std::vector<traj::Point>>& heads) {
  pred::PredictionSet ps(heads.size(), heads[0].size());
  for (std::size_t k = 0; k < heads.size(); ++k) {
    for (std::size_t s = 0; s < heads[k].size(); ++s) {
      ps.at(k, s, 0) = heads[k][s][0];
      ps.at(k, s, 1) = heads[k][s][1];
    }
  }
  return ps;
}

}  // namespace

TEST_CASE("an exact head yields zero metrics") {
  std::vector<traj::Point> gt = {{1, 1}, {2, 2}, {3, 3}};
  const auto ps = from_heads({gt, {{9, 9}, {9, 9}, {9, 9}}});
  const auto m = eval::min_ade_fde(ps, gt);
  CHECK(m.min_ade == doctest::Approx(0.0));
  CHECK(m.min_fde == doctest::Approx(0.0));
}

TEST_CASE("single head at constant offset d gives (d, d)") {
  std::vector<traj::Point> gt = {{0, 0}, {1, 0}, {2, 0}};
  std::vector<traj::Point> off = {{0, 0.75}, {1, 0.75}, {2, 0.75}};
  const auto m = eval::min_ade_fde(from_heads({off}), gt);
  CHECK(m.min_ade == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(m.min_fde == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("the two minima are taken independently per metric") {
  // Head 0: great ADE, bad FDE. Head 1: bad ADE, perfect FDE.
  std::vector<traj::Point> gt = {{0, 0}, {1, 0}, {2, 0}};
  std::vector<traj::Point> h0 = {{0, 0}, {1, 0}, {2, 3}};
  std::vector<traj::Point> h1 = {{0, 5}, {1, 5}, {2, 0}};
  const auto m = eval::min_ade_fde(from_heads({h0, h1}), gt);
  CHECK(m.min_ade == doctest::Approx(1.0));  // head 0: (0 + 0 + 3)/3
  CHECK(m.min_fde == doctest::Approx(0.0));  // head 1 final point exact
}

TEST_CASE("random prediction sets match the per-head loop oracle") {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t heads = 5, t = 6;
    std::vector<std::vector<std::pair<double, double>>> opred(
        heads, std::vector<std::pair<double, double>>(t));
    std::vector<std::pair<double, double>> ogt(t);
    std::vector<std::vector<traj::Point>> hp(heads, std::vector<traj::Point>(t));
    std::vector<traj::Point> gt(t);
    for (std::size_t k = 0; k < heads; ++k) {
      for (std::size_t s = 0; s < t; ++s) {
        opred[k][s] = {rng.uniform(-4, 4), rng.uniform(-4, 4)};
        hp[k][s] = {opred[k][s].first, opred[k][s].second};
      }
    }
    for (std::size_t s = 0; s < t; ++s) {
      ogt[s] = {rng.uniform(-4, 4), rng.uniform(-4, 4)};
      gt[s] = {ogt[s].first, ogt[s].second};
    }
    const auto m = eval::min_ade_fde(from_heads(hp), gt);
    const auto [oade, ofde] = oracle::min_ade_fde(opred, ogt);
    CHECK(m.min_ade == doctest::Approx(oade).epsilon(1e-12));
    CHECK(m.min_fde == doctest::Approx(ofde).epsilon(1e-12));
  }
}

TEST_CASE("bucket sizes use the ceiling and nest cumulatively") {
  std::vector<double> fdes(100);
  for (std::size_t i = 0; i < 100; ++i) fdes[i] = static_cast<double>(i);
  const auto idx = eval::bucket_indices(fdes);
  CHECK(idx[0].size() == 1);
  CHECK(idx[1].size() == 2);
  CHECK(idx[4].size() == 5);
  // Nesting.
  for (int p = 1; p < 5; ++p) {
    for (const auto i : idx[p - 1]) {
      CHECK(std::find(idx[p].begin(), idx[p].end(), i) != idx[p].end());
    }
  }
  // Largest-error samples first.
  CHECK(idx[0][0] == 99);

  std::vector<double> fdes37(37);
  for (std::size_t i = 0; i < 37; ++i) fdes37[i] = static_cast<double>(i);
  const auto idx37 = eval::bucket_indices(fdes37);
  CHECK(idx37[0].size() == 1);  // ceil(0.37)
  CHECK(idx37[2].size() == 2);  // ceil(1.11)
}

TEST_CASE("bucket membership is model-invariant and rest complements top5") {
  Rng rng(2);
  const std::size_t n = 200;
  std::vector<double> base_fdes(n);
  for (auto& v : base_fdes) v = rng.uniform(0, 5);
  std::vector<eval::SampleMetrics> model_a(n), model_b(n);
  for (std::size_t i = 0; i < n; ++i) {
    model_a[i] = {rng.uniform(0, 2), rng.uniform(0, 2)};
    model_b[i] = {rng.uniform(0, 2), rng.uniform(0, 2)};
  }
  const auto rep_a = eval::bucket_by_baseline(base_fdes, model_a);
  const auto rep_b = eval::bucket_by_baseline(base_fdes, model_b);
  for (int p = 0; p < 5; ++p) CHECK(rep_a.top[p].n == rep_b.top[p].n);
  CHECK(rep_a.all.n == rep_a.rest.n + rep_a.top[4].n);
  // Identical index sets regardless of the evaluated model.
  CHECK(eval::bucket_indices(base_fdes) == eval::bucket_indices(base_fdes));

  std::vector<eval::SampleMetrics> short_metrics(n - 1);
  CHECK_THROWS_AS(eval::bucket_by_baseline(base_fdes, short_metrics),
                  fend::ContractError);
}

TEST_CASE("self-evaluation reproduces the baseline's own tail profile") {
  Rng rng(3);
  const std::size_t n = 500;
  std::vector<double> fdes(n);
  std::vector<eval::SampleMetrics> metrics(n);
  for (std::size_t i = 0; i < n; ++i) {
    fdes[i] = rng.uniform(0.0, 4.0);
    metrics[i] = {fdes[i] * 0.8, fdes[i]};
  }
  const auto rep = eval::bucket_by_baseline(fdes, metrics);
  // Bucket means are monotone non-increasing from top1 through rest.
  for (int p = 1; p < 5; ++p) CHECK(rep.top[p].min_fde <= rep.top[p - 1].min_fde + 1e-12);
  CHECK(rep.rest.min_fde <= rep.top[4].min_fde);
  CHECK(rep.all.min_fde <= rep.top[0].min_fde);
}

TEST_CASE("fde cdf is monotone, ends at one, and matches the rank oracle") {
  Rng rng(4);
  std::vector<double> fdes(137);
  for (auto& v : fdes) v = rng.uniform(0.0, 3.0);
  const auto cdf = eval::fde_cdf(fdes, 50);
  REQUIRE(cdf.size() == 50);
  CHECK(cdf.back()[1] == doctest::Approx(1.0));
  for (std::size_t b = 1; b < cdf.size(); ++b) {
    CHECK(cdf[b][1] >= cdf[b - 1][1]);
  }
  for (const auto& [x, f] : cdf) {
    CHECK(f == doctest::Approx(oracle::cdf_at(fdes, x)).epsilon(1e-12));
  }
}

TEST_CASE("all-equal fdes give a step function") {
  const std::vector<double> fdes(10, 2.0);
  const auto cdf = eval::fde_cdf(fdes, 5);
  CHECK(cdf[0][1] == doctest::Approx(0.0));  // x = 0 < 2
  CHECK(cdf.back()[1] == doctest::Approx(1.0));
}

TEST_CASE("separation stats on blobs, shuffles, and degenerate features") {
  Rng rng(5);
  SUBCASE("two far blobs have silhouette above 0.9") {
    const auto blobs = testutil::make_blobs(100, {{0, 0}, {30, 0}}, 1.0, rng);
    std::vector<int> labels(blobs.labels.begin(), blobs.labels.end());
    const auto stats = eval::separation_stats(blobs.features, labels);
    CHECK(stats.silhouette > 0.9);
    CHECK(stats.ratio > 1.0);
  }
  SUBCASE("random labels give near-zero silhouette") {
    const auto blobs = testutil::make_blobs(500, {{0, 0}, {30, 0}}, 1.0, rng);
    std::vector<int> labels(1000);
    for (auto& l : labels) l = static_cast<int>(rng.below(2));
    CHECK(std::abs(eval::silhouette_score(blobs.features, labels)) < 0.1);
  }
  SUBCASE("identical features give zero intra and an infinite ratio") {
    cluster::FeatureMatrix m;
    m.rows = 6;
    m.cols = 2;
    m.data.assign(12, 1.5);
    std::vector<int> labels = {0, 0, 0, 1, 1, 1};
    const auto stats = eval::separation_stats(m, labels);
    CHECK(stats.intra_mean == 0.0);
    CHECK(std::isinf(stats.ratio));
  }
  SUBCASE("a single label is a contract error") {
    cluster::FeatureMatrix m;
    m.rows = 3;
    m.cols = 2;
    m.data.assign(6, 0.0);
    CHECK_THROWS_AS(eval::separation_stats(m, {1, 1, 1}), fend::ContractError);
  }
}

TEST_CASE("pca projection separates well-split blobs in the first component") {
  Rng rng(6);
  const auto blobs = testutil::make_blobs(80, {{0, 0, 0, 0}, {20, 0, 0, 0}}, 0.5, rng);
  const auto proj = eval::pca2d(blobs.features);
  double lo = 1e300, hi = -1e300;
  for (std::size_t i = 0; i < 80; ++i) {
    lo = std::min(lo, proj[i][0]);
    hi = std::max(hi, proj[i][0]);
  }
  double lo2 = 1e300, hi2 = -1e300;
  for (std::size_t i = 80; i < 160; ++i) {
    lo2 = std::min(lo2, proj[i][0]);
    hi2 = std::max(hi2, proj[i][0]);
  }
  CHECK((hi < lo2 || hi2 < lo));  // disjoint pc1 ranges
}

TEST_CASE("tail buckets ranked by a CV-baseline on text-format data are monotone") {
  // Paper-shape sanity: when the evaluated model IS the ranking baseline, the
  // per-bucket FDE means decrease from top1 to rest.
  traj::SynthConfig scfg;
  scfg.n = 400;
  scfg.tail_fraction = 0.15;
  scfg.seed = 8;
  const auto split = traj::synth_longtail(scfg);

  // Round-trip through the text format to exercise the loader path.
  const auto txt = std::filesystem::temp_directory_path() / "fend_eval_fmt.txt";
  {
    std::ofstream out(txt);
    std::int64_t agent = 0;
    for (const auto& s : split.test) {
      const auto obs = traj::raw_obs(s);
      const auto fut = traj::raw_fut(s);
      std::int64_t frame = 0;
      for (const auto& p : obs) out << (frame++) * 10 << " " << agent << " " << p[0] << " " << p[1] << "\n";
      for (const auto& p : fut) out << (frame++) * 10 << " " << agent << " " << p[0] << " " << p[1] << "\n";
      ++agent;
    }
  }
  const auto loaded = traj::load_ethucy_text(txt, split.t_obs, split.t_pred, split.dt);
  REQUIRE(loaded.train.size() == split.test.size());

  std::vector<double> fdes;
  std::vector<eval::SampleMetrics> metrics;
  for (const auto& s : loaded.train) {
    const auto obs = traj::raw_obs(s);
    const auto fut = traj::raw_fut(s);
    const auto kp = kalman::kalman_predict(obs, split.t_pred, split.dt);
    pred::PredictionSet ps(1, split.t_pred);
    for (std::size_t st = 0; st < split.t_pred; ++st) {
      ps.at(0, st, 0) = kp[st][0];
      ps.at(0, st, 1) = kp[st][1];
    }
    const auto m = eval::min_ade_fde(ps, fut);
    fdes.push_back(m.min_fde);
    metrics.push_back(m);
  }
  const auto rep = eval::bucket_by_baseline(fdes, metrics);
  for (int p = 1; p < 5; ++p) CHECK(rep.top[p].min_fde <= rep.top[p - 1].min_fde + 1e-12);
  CHECK(rep.rest.min_fde <= rep.top[4].min_fde + 1e-12);
}
