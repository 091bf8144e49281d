#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "fend/nn.hpp"
#include "fend/pcl.hpp"
#include "fend/tape.hpp"
#include "fend/trajdata.hpp"

namespace fend::pred {

using num::Tape;
using num::Tensor;

struct PredictorConfig {
  std::size_t enc_hidden = 128;
  std::size_t dec_hidden = 128;
  std::size_t dec_input = 32;
  std::size_t hyper_hidden = 128;
  std::size_t hyper_embed = 16;  // dim of each z vector
  std::size_t heads = 20;
  std::size_t proj_dim = 64;
};

// Gate order used throughout: i, g, f, o.
struct GateParams {
  Tensor w_h;   // [H x H]
  Tensor w_x;   // [H x Nx]
  Tensor w_hz;  // [H x Z]
  Tensor w_xz;  // [H x Z]
  Tensor w_bz;  // [H x Z]
  Tensor b0;    // [H]
};

struct PredictorParams {
  PredictorConfig cfg;
  nn::LstmParams enc;          // input dim 2 (per-step displacements)
  Tensor proj_w, proj_b;       // projection head for the contrastive space
  Tensor hyper1_w, hyper1_b;   // shared hypernetwork hidden layer
  // One output head per z vector: z_h, z_x, z_b_i, z_b_g, z_b_f, z_b_o.
  std::array<Tensor, 6> hyper_out_w;
  std::array<Tensor, 6> hyper_out_b;
  std::array<GateParams, 4> gates;
  Tensor seed_x_w, seed_x_b;   // v -> x_1
  Tensor seed_h_w, seed_h_b;   // v -> h_0
  std::vector<Tensor> head_w;  // K x [2 x H]
  std::vector<Tensor> head_b;  // K x [2]

  // Fixed enumeration order for optimizers and checkpoints.
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
};

PredictorParams make_predictor(const PredictorConfig& cfg, Rng& rng);

// Tape handles mirroring PredictorParams.
struct PredictorIds {
  nn::LstmIds enc;
  Tape::Id proj_w, proj_b;
  Tape::Id hyper1_w, hyper1_b;
  std::array<Tape::Id, 6> hyper_out_w;
  std::array<Tape::Id, 6> hyper_out_b;
  struct GateIds {
    Tape::Id w_h, w_x, w_hz, w_xz, w_bz, b0;
  };
  std::array<GateIds, 4> gates;
  Tape::Id seed_x_w, seed_x_b, seed_h_w, seed_h_b;
  std::vector<Tape::Id> head_w, head_b;
};

PredictorIds mark_params(Tape& t, PredictorParams& p);
PredictorIds bind_const(Tape& t, const PredictorParams& p);

// Builds the [r x T_obs x 2] per-step displacement constant for a batch
// (first step displacement is zero).
Tensor obs_displacements(const std::vector<const traj::TrajectorySample*>& batch);

struct EncodeOut {
  Tape::Id v;          // [r x enc_hidden], final recurrent state
  Tape::Id projected;  // [r x proj_dim], unit rows (contrastive space)
};

EncodeOut encode(Tape& t, const PredictorIds& ids, const PredictorConfig& cfg,
                 const std::vector<const traj::TrajectorySample*>& batch);

struct HyperZ {
  Tape::Id z_h, z_x;
  std::array<Tape::Id, 4> z_b;  // per gate i, g, f, o
};

// Two-layer hypernetwork: z vectors from the encoder feature, computed once
// per instance and held fixed across decode timesteps.
HyperZ hyper_embed(Tape& t, const PredictorIds& ids, Tape::Id v);

// One HyperLSTM step:
//   pre_y = LN(d_h^y ∘ (W_h^y h) + d_x^y ∘ (W_x^y x) + W_bz^y z_b^y + b0^y)
//   m' = sigmoid(pre_f) ∘ m + sigmoid(pre_i) ∘ tanh(pre_g)
//   h' = sigmoid(pre_o) ∘ tanh(m')
std::pair<Tape::Id, Tape::Id> hyperlstm_step(Tape& t, const PredictorIds& ids,
                                             const HyperZ& z, Tape::Id x, Tape::Id h,
                                             Tape::Id m);

// Plain LSTM step over the same base weights (no modulation, no layer norm);
// the decoder used by the no-hypernetwork ablation.
std::pair<Tape::Id, Tape::Id> plain_step(Tape& t, const PredictorIds& ids, Tape::Id x,
                                         Tape::Id h, Tape::Id m);

struct DecodeOut {
  // positions[k][t]: [r x 2] cumulative position of head k at step t+1.
  std::vector<std::vector<Tape::Id>> positions;
};

// Seeds x_1/h_0 from v, runs t_pred steps with x held at x_1, and maps each
// step's hidden state through the K displacement heads (cumulative sums give
// positions in the normalized frame).
DecodeOut decode(Tape& t, const PredictorIds& ids, const PredictorConfig& cfg,
                 Tape::Id v, std::size_t t_pred, bool use_hyper);

// K x T_pred x 2 predicted positions for one sample, normalized frame.
struct PredictionSet {
  std::size_t heads = 0;
  std::size_t t_pred = 0;
  std::vector<double> data;

  PredictionSet() = default;
  PredictionSet(std::size_t k, std::size_t t) : heads(k), t_pred(t), data(k * t * 2, 0.0) {}
  double& at(std::size_t k, std::size_t t, std::size_t c) {
    return data[(k * t_pred + t) * 2 + c];
  }
  double at(std::size_t k, std::size_t t, std::size_t c) const {
    return data[(k * t_pred + t) * 2 + c];
  }
};

// Batched inference with constant-bound parameters.
std::vector<PredictionSet> predict_batch(const PredictorParams& params,
                                         const std::vector<const traj::TrajectorySample*>& batch,
                                         std::size_t t_pred, bool use_hyper);

// Winner-take-all regression loss on one sample: mean, over the k_winners
// heads with lowest ADE, of the per-head mean squared error. Plain-number
// version used for gating and tests.
double ewta_loss_value(const PredictionSet& pred, const std::vector<traj::Point>& gt,
                       std::size_t k_winners);

// Batched tape version; gradients flow only to the winning heads.
// Returns the mean over the batch. `per_sample_out`, when given, receives
// each sample's EWTA loss value.
Tape::Id ewta_loss_batch(Tape& t, const DecodeOut& dec,
                         const std::vector<const traj::TrajectorySample*>& batch,
                         std::size_t k_winners, std::vector<double>* per_sample_out = nullptr);

// Evolving winner counts: K, ceil(K/2), ..., 1.
std::vector<std::size_t> ewta_stages(std::size_t heads);

}  // namespace fend::pred
