#include "fend/kalman.hpp"

#include <cmath>

#include "fend/errors.hpp"

namespace fend::kalman {

namespace {

// 4-state CV filter, state (x, y, vx, vy). F, Q, H, R and the initial
// covariance are all block-diagonal per axis, so the filter decomposes
// exactly into two independent 2-state (pos, vel) filters.
struct Axis {
  double pos, vel;
  double p00, p01, p11;  // symmetric covariance
};

void predict_axis(Axis& a, double dt, double q) {
  // F = [1 dt; 0 1], Q = q * [dt^4/4 dt^3/2; dt^3/2 dt^2]
  a.pos += dt * a.vel;
  const double p00 = a.p00 + dt * (a.p01 + a.p01) + dt * dt * a.p11;
  const double p01 = a.p01 + dt * a.p11;
  a.p00 = p00 + q * dt * dt * dt * dt / 4.0;
  a.p01 = p01 + q * dt * dt * dt / 2.0;
  a.p11 = a.p11 + q * dt * dt;
}

void update_axis(Axis& a, double z, double r) {
  const double s = a.p00 + r;
  const double k0 = a.p00 / s;
  const double k1 = a.p01 / s;
  const double innov = z - a.pos;
  a.pos += k0 * innov;
  a.vel += k1 * innov;
  const double p00 = (1.0 - k0) * a.p00;
  const double p01 = (1.0 - k0) * a.p01;
  const double p11 = a.p11 - k1 * a.p01;
  a.p00 = p00;
  a.p01 = p01;
  a.p11 = p11;
}

}  // namespace

std::vector<traj::Point> kalman_predict(const std::vector<traj::Point>& obs,
                                        std::size_t t_pred, double dt,
                                        const KalmanConfig& cfg) {
  if (obs.size() < 2) throw ContractError("kalman_predict: need at least 2 observations");
  if (cfg.process_noise_sigma <= 0.0 || cfg.obs_noise_sigma <= 0.0) {
    throw ConfigError("kalman_predict: noise sigmas must be positive");
  }
  const double q = cfg.process_noise_sigma * cfg.process_noise_sigma;
  const double r = cfg.obs_noise_sigma * cfg.obs_noise_sigma;

  // Initialize from the first two points: position + finite-difference
  // velocity, unit diagonal covariance.
  Axis ax{obs[0][0], (obs[1][0] - obs[0][0]) / dt, 1.0, 0.0, 1.0};
  Axis ay{obs[0][1], (obs[1][1] - obs[0][1]) / dt, 1.0, 0.0, 1.0};
  for (std::size_t i = 1; i < obs.size(); ++i) {
    predict_axis(ax, dt, q);
    predict_axis(ay, dt, q);
    update_axis(ax, obs[i][0], r);
    update_axis(ay, obs[i][1], r);
  }

  std::vector<traj::Point> out;
  out.reserve(t_pred);
  for (std::size_t k = 0; k < t_pred; ++k) {
    predict_axis(ax, dt, q);
    predict_axis(ay, dt, q);
    out.push_back({ax.pos, ay.pos});
  }
  return out;
}

std::vector<double> kalman_scores(const traj::DatasetSplit& split,
                                  const KalmanConfig& cfg, bool include_train) {
  std::vector<double> scores;
  const auto score_one = [&](const traj::TrajectorySample& s) {
    const auto obs = traj::raw_obs(s);
    const auto fut = traj::raw_fut(s);
    const auto pred = kalman_predict(obs, split.t_pred, split.dt, cfg);
    const double dx = pred.back()[0] - fut.back()[0];
    const double dy = pred.back()[1] - fut.back()[1];
    scores.push_back(std::sqrt(dx * dx + dy * dy));
  };
  if (include_train) {
    for (const auto& s : split.train) score_one(s);
  }
  for (const auto& s : split.test) score_one(s);
  return scores;
}

}  // namespace fend::kalman
