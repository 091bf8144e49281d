#pragma once

#include <vector>

#include "fend/trajdata.hpp"

namespace fend::kalman {

struct KalmanConfig {
  double process_noise_sigma = 0.5;  // white-noise acceleration density
  double obs_noise_sigma = 0.05;     // position measurement noise, meters
};

// Constant-velocity Kalman baseline: filter the observed track with a 4-state
// (x, y, vx, vy) model, then roll the motion model forward t_pred steps with
// no measurement updates. Input and output are in the same frame.
std::vector<traj::Point> kalman_predict(const std::vector<traj::Point>& obs,
                                        std::size_t t_pred, double dt,
                                        const KalmanConfig& cfg = {});

// Final displacement error of the CV Kalman prediction per sample, computed
// in raw (denormalized) coordinates. Order follows train-then-test when
// `include_train` is set, else test only.
std::vector<double> kalman_scores(const traj::DatasetSplit& split,
                                  const KalmanConfig& cfg = {},
                                  bool include_train = false);

}  // namespace fend::kalman
