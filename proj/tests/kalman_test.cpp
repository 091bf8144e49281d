#include <cmath>

#include "doctest.h"
#include "fend/kalman.hpp"
#include "fend/trajdata.hpp"

using namespace fend;

TEST_CASE("noiseless straight line predicts exactly") {
  std::vector<traj::Point> obs;
  for (int i = 0; i < 8; ++i) obs.push_back({0.4 * i, 0.0});  // 1 m/s along x
  const auto pred = kalman::kalman_predict(obs, 12, 0.4);
  for (int k = 0; k < 12; ++k) {
    const double expect = 0.4 * (8 + k);
    CHECK(std::abs(pred[k][0] - expect) < 1e-9);
    CHECK(std::abs(pred[k][1]) < 1e-9);
  }
}

TEST_CASE("stationary input stays put") {
  std::vector<traj::Point> obs(8, {3.0, -2.0});
  const auto pred = kalman::kalman_predict(obs, 12, 0.4);
  for (const auto& p : pred) {
    CHECK(std::abs(p[0] - 3.0) < 1e-9);
    CHECK(std::abs(p[1] + 2.0) < 1e-9);
  }
}

TEST_CASE("turning sample has a large final error at the 4.8 s horizon") {
  traj::SynthConfig cfg;
  cfg.n = 400;
  cfg.tail_fraction = 0.2;
  cfg.seed = 11;
  cfg.noise_sigma = 0.0;
  const auto split = traj::synth_longtail(cfg);
  std::size_t checked = 0;
  for (const auto& s : split.train) {
    if (s.pattern_label != 1) continue;  // turn pattern
    const auto obs = traj::raw_obs(s);
    const auto fut = traj::raw_fut(s);
    const auto pred = kalman::kalman_predict(obs, split.t_pred, split.dt);
    const double fde = std::hypot(pred.back()[0] - fut.back()[0],
                                  pred.back()[1] - fut.back()[1]);
    CHECK(fde > 0.5);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("scores: all-head noiseless split scores below 1e-9") {
  traj::SynthConfig cfg;
  cfg.n = 120;
  cfg.tail_fraction = 0.01;  // 1 tail sample, ignored below
  cfg.seed = 2;
  cfg.noise_sigma = 0.0;
  auto split = traj::synth_longtail(cfg);
  // Strip the tail sample so the whole split is constant-velocity.
  const auto strip = [](std::vector<traj::TrajectorySample>& v) {
    std::erase_if(v, [](const auto& s) { return s.pattern_label != 0; });
  };
  strip(split.train);
  strip(split.test);
  const auto scores = kalman::kalman_scores(split, {}, true);
  for (const double s : scores) CHECK(s < 1e-9);
}

TEST_CASE("scores are invariant under the rigid normalization") {
  traj::SynthConfig cfg;
  cfg.n = 150;
  cfg.tail_fraction = 0.2;
  cfg.seed = 9;
  const auto split = traj::synth_longtail(cfg);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& s = split.train[i];
    const auto raw_pred = kalman::kalman_predict(traj::raw_obs(s), split.t_pred, split.dt);
    const auto norm_pred = kalman::kalman_predict(s.obs, split.t_pred, split.dt);
    const auto raw_f = traj::raw_fut(s);
    const double fde_raw = std::hypot(raw_pred.back()[0] - raw_f.back()[0],
                                      raw_pred.back()[1] - raw_f.back()[1]);
    const double fde_norm = std::hypot(norm_pred.back()[0] - s.fut.back()[0],
                                       norm_pred.back()[1] - s.fut.back()[1]);
    CHECK(fde_raw == doctest::Approx(fde_norm).epsilon(1e-9));
  }
}

TEST_CASE("mean tail score exceeds mean head score on a mixed split") {
  traj::SynthConfig cfg;
  cfg.n = 500;
  cfg.tail_fraction = 0.2;
  cfg.seed = 21;
  const auto split = traj::synth_longtail(cfg);
  const auto scores = kalman::kalman_scores(split, {}, true);
  double head = 0.0, tail = 0.0;
  std::size_t nh = 0, nt = 0;
  std::size_t idx = 0;
  for (const auto& s : split.train) {
    (s.pattern_label == 0 ? head : tail) += scores[idx];
    (s.pattern_label == 0 ? nh : nt) += 1;
    ++idx;
  }
  for (const auto& s : split.test) {
    (s.pattern_label == 0 ? head : tail) += scores[idx];
    (s.pattern_label == 0 ? nh : nt) += 1;
    ++idx;
  }
  CHECK(tail / static_cast<double>(nt) > head / static_cast<double>(nh));
}
