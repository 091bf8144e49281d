#include "fend/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fend/errors.hpp"

namespace fend::pred {

namespace {
constexpr const char* kGateNames[4] = {"i", "g", "f", "o"};
constexpr const char* kZNames[6] = {"zh", "zx", "zbi", "zbg", "zbf", "zbo"};
}  // namespace

void PredictorParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("enc.wx", enc.wx);
  fn("enc.wh", enc.wh);
  fn("enc.b", enc.b);
  fn("proj.w", proj_w);
  fn("proj.b", proj_b);
  fn("hyper1.w", hyper1_w);
  fn("hyper1.b", hyper1_b);
  for (int z = 0; z < 6; ++z) {
    fn(std::string("hyper.") + kZNames[z] + ".w", hyper_out_w[z]);
    fn(std::string("hyper.") + kZNames[z] + ".b", hyper_out_b[z]);
  }
  for (int g = 0; g < 4; ++g) {
    const std::string p = std::string("gate.") + kGateNames[g] + ".";
    fn(p + "wh", gates[g].w_h);
    fn(p + "wx", gates[g].w_x);
    fn(p + "whz", gates[g].w_hz);
    fn(p + "wxz", gates[g].w_xz);
    fn(p + "wbz", gates[g].w_bz);
    fn(p + "b0", gates[g].b0);
  }
  fn("seed.x.w", seed_x_w);
  fn("seed.x.b", seed_x_b);
  fn("seed.h.w", seed_h_w);
  fn("seed.h.b", seed_h_b);
  for (std::size_t k = 0; k < head_w.size(); ++k) {
    fn("head." + std::to_string(k) + ".w", head_w[k]);
    fn("head." + std::to_string(k) + ".b", head_b[k]);
  }
}

PredictorParams make_predictor(const PredictorConfig& cfg, Rng& rng) {
  if (cfg.enc_hidden < 1 || cfg.dec_hidden < 1 || cfg.dec_input < 1 ||
      cfg.hyper_hidden < 1 || cfg.hyper_embed < 1 || cfg.heads < 1 || cfg.proj_dim < 1) {
    throw ConfigError("make_predictor: all dimensions must be >= 1");
  }
  PredictorParams p;
  p.cfg = cfg;
  p.enc = nn::make_lstm(2, cfg.enc_hidden, rng);
  p.proj_w = nn::init_matrix(cfg.proj_dim, cfg.enc_hidden, rng);
  p.proj_b = nn::init_vector(cfg.proj_dim, rng, cfg.enc_hidden);
  p.hyper1_w = nn::init_matrix(cfg.hyper_hidden, cfg.enc_hidden, rng);
  p.hyper1_b = nn::init_vector(cfg.hyper_hidden, rng, cfg.enc_hidden);
  for (int z = 0; z < 6; ++z) {
    p.hyper_out_w[z] = nn::init_matrix(cfg.hyper_embed, cfg.hyper_hidden, rng);
    p.hyper_out_b[z] = nn::init_vector(cfg.hyper_embed, rng, cfg.hyper_hidden);
  }
  for (int g = 0; g < 4; ++g) {
    p.gates[g].w_h = nn::init_matrix(cfg.dec_hidden, cfg.dec_hidden, rng);
    p.gates[g].w_x = nn::init_matrix(cfg.dec_hidden, cfg.dec_input, rng);
    p.gates[g].w_hz = nn::init_matrix(cfg.dec_hidden, cfg.hyper_embed, rng);
    p.gates[g].w_xz = nn::init_matrix(cfg.dec_hidden, cfg.hyper_embed, rng);
    p.gates[g].w_bz = nn::init_matrix(cfg.dec_hidden, cfg.hyper_embed, rng);
    p.gates[g].b0 = nn::init_vector(cfg.dec_hidden, rng, cfg.dec_hidden);
  }
  p.seed_x_w = nn::init_matrix(cfg.dec_input, cfg.enc_hidden, rng);
  p.seed_x_b = nn::init_vector(cfg.dec_input, rng, cfg.enc_hidden);
  p.seed_h_w = nn::init_matrix(cfg.dec_hidden, cfg.enc_hidden, rng);
  p.seed_h_b = nn::init_vector(cfg.dec_hidden, rng, cfg.enc_hidden);
  p.head_w.reserve(cfg.heads);
  p.head_b.reserve(cfg.heads);
  for (std::size_t k = 0; k < cfg.heads; ++k) {
    p.head_w.push_back(nn::init_matrix(2, cfg.dec_hidden, rng));
    p.head_b.push_back(nn::init_vector(2, rng, cfg.dec_hidden));
  }
  return p;
}

namespace {

PredictorIds bind(Tape& t, const PredictorParams& p, bool as_params) {
  const auto put = [&](const Tensor& x) {
    return as_params ? t.param(x) : t.constant(x);
  };
  PredictorIds ids;
  ids.enc = {put(p.enc.wx), put(p.enc.wh), put(p.enc.b)};
  ids.proj_w = put(p.proj_w);
  ids.proj_b = put(p.proj_b);
  ids.hyper1_w = put(p.hyper1_w);
  ids.hyper1_b = put(p.hyper1_b);
  for (int z = 0; z < 6; ++z) {
    ids.hyper_out_w[z] = put(p.hyper_out_w[z]);
    ids.hyper_out_b[z] = put(p.hyper_out_b[z]);
  }
  for (int g = 0; g < 4; ++g) {
    ids.gates[g] = {put(p.gates[g].w_h), put(p.gates[g].w_x), put(p.gates[g].w_hz),
                    put(p.gates[g].w_xz), put(p.gates[g].w_bz), put(p.gates[g].b0)};
  }
  ids.seed_x_w = put(p.seed_x_w);
  ids.seed_x_b = put(p.seed_x_b);
  ids.seed_h_w = put(p.seed_h_w);
  ids.seed_h_b = put(p.seed_h_b);
  for (std::size_t k = 0; k < p.head_w.size(); ++k) {
    ids.head_w.push_back(put(p.head_w[k]));
    ids.head_b.push_back(put(p.head_b[k]));
  }
  return ids;
}

}  // namespace

PredictorIds mark_params(Tape& t, PredictorParams& p) { return bind(t, p, true); }
PredictorIds bind_const(Tape& t, const PredictorParams& p) { return bind(t, p, false); }

Tensor obs_displacements(const std::vector<const traj::TrajectorySample*>& batch) {
  if (batch.empty()) throw ContractError("obs_displacements: empty batch");
  const std::size_t r = batch.size();
  const std::size_t t_obs = batch[0]->obs.size();
  Tensor x({r, t_obs, 2});
  for (std::size_t i = 0; i < r; ++i) {
    const auto& obs = batch[i]->obs;
    if (obs.size() != t_obs) throw ContractError("obs_displacements: ragged batch");
    for (std::size_t s = 1; s < t_obs; ++s) {
      x.at3(i, s, 0) = obs[s][0] - obs[s - 1][0];
      x.at3(i, s, 1) = obs[s][1] - obs[s - 1][1];
    }
  }
  return x;
}

EncodeOut encode(Tape& t, const PredictorIds& ids, const PredictorConfig& cfg,
                 const std::vector<const traj::TrajectorySample*>& batch) {
  const std::size_t r = batch.size();
  const std::size_t t_obs = batch[0]->obs.size();
  const Tensor disp = obs_displacements(batch);
  Tape::Id h = t.constant(Tensor({r, cfg.enc_hidden}));
  Tape::Id m = h;
  for (std::size_t s = 0; s < t_obs; ++s) {
    Tensor xs({r, 2});
    for (std::size_t i = 0; i < r; ++i) {
      xs.at2(i, 0) = disp.at3(i, s, 0);
      xs.at2(i, 1) = disp.at3(i, s, 1);
    }
    const auto [h2, m2] = nn::lstm_step(t, ids.enc, t.constant(std::move(xs)), h, m);
    h = h2;
    m = m2;
  }
  EncodeOut out;
  out.v = h;
  out.projected = pcl::project(t, h, ids.proj_w, ids.proj_b);
  return out;
}

HyperZ hyper_embed(Tape& t, const PredictorIds& ids, Tape::Id v) {
  const Tape::Id hid = t.tanh(t.linear(v, ids.hyper1_w, ids.hyper1_b));
  HyperZ z;
  z.z_h = t.linear(hid, ids.hyper_out_w[0], ids.hyper_out_b[0]);
  z.z_x = t.linear(hid, ids.hyper_out_w[1], ids.hyper_out_b[1]);
  for (int g = 0; g < 4; ++g) {
    z.z_b[g] = t.linear(hid, ids.hyper_out_w[2 + g], ids.hyper_out_b[2 + g]);
  }
  return z;
}

std::pair<Tape::Id, Tape::Id> hyperlstm_step(Tape& t, const PredictorIds& ids,
                                             const HyperZ& z, Tape::Id x, Tape::Id h,
                                             Tape::Id m) {
  std::array<Tape::Id, 4> pre;
  for (int g = 0; g < 4; ++g) {
    const auto& gate = ids.gates[g];
    const Tape::Id d_h = t.linear(z.z_h, gate.w_hz, Tape::kNone);
    const Tape::Id d_x = t.linear(z.z_x, gate.w_xz, Tape::kNone);
    const Tape::Id bias = t.linear(z.z_b[g], gate.w_bz, gate.b0);
    const Tape::Id rec = t.mul(d_h, t.linear(h, gate.w_h, Tape::kNone));
    const Tape::Id inp = t.mul(d_x, t.linear(x, gate.w_x, Tape::kNone));
    pre[g] = t.layer_norm(t.add(t.add(rec, inp), bias));
  }
  const Tape::Id m2 = t.add(t.mul(t.sigmoid(pre[2]), m),
                            t.mul(t.sigmoid(pre[0]), t.tanh(pre[1])));
  const Tape::Id h2 = t.mul(t.sigmoid(pre[3]), t.tanh(m2));
  return {h2, m2};
}

std::pair<Tape::Id, Tape::Id> plain_step(Tape& t, const PredictorIds& ids, Tape::Id x,
                                         Tape::Id h, Tape::Id m) {
  std::array<Tape::Id, 4> pre;
  for (int g = 0; g < 4; ++g) {
    const auto& gate = ids.gates[g];
    pre[g] = t.add(t.linear(h, gate.w_h, gate.b0), t.linear(x, gate.w_x, Tape::kNone));
  }
  const Tape::Id m2 = t.add(t.mul(t.sigmoid(pre[2]), m),
                            t.mul(t.sigmoid(pre[0]), t.tanh(pre[1])));
  const Tape::Id h2 = t.mul(t.sigmoid(pre[3]), t.tanh(m2));
  return {h2, m2};
}

DecodeOut decode(Tape& t, const PredictorIds& ids, const PredictorConfig& cfg,
                 Tape::Id v, std::size_t t_pred, bool use_hyper) {
  const std::size_t r = t.val(v).dim(0);
  const Tape::Id x1 = t.linear(v, ids.seed_x_w, ids.seed_x_b);
  Tape::Id h = t.linear(v, ids.seed_h_w, ids.seed_h_b);
  Tape::Id m = t.constant(Tensor({r, cfg.dec_hidden}));
  HyperZ z;
  if (use_hyper) z = hyper_embed(t, ids, v);

  DecodeOut out;
  out.positions.assign(cfg.heads, {});
  std::vector<Tape::Id> prev(cfg.heads, Tape::kNone);
  for (std::size_t step = 0; step < t_pred; ++step) {
    const auto [h2, m2] = use_hyper ? hyperlstm_step(t, ids, z, x1, h, m)
                                    : plain_step(t, ids, x1, h, m);
    h = h2;
    m = m2;
    for (std::size_t k = 0; k < cfg.heads; ++k) {
      const Tape::Id disp = t.linear(h, ids.head_w[k], ids.head_b[k]);
      const Tape::Id pos = prev[k] == Tape::kNone ? disp : t.add(prev[k], disp);
      out.positions[k].push_back(pos);
      prev[k] = pos;
    }
  }
  return out;
}

std::vector<PredictionSet> predict_batch(const PredictorParams& params,
                                         const std::vector<const traj::TrajectorySample*>& batch,
                                         std::size_t t_pred, bool use_hyper) {
  std::vector<PredictionSet> out;
  if (batch.empty()) return out;
  Tape t;
  const PredictorIds ids = bind_const(t, params);
  const EncodeOut enc = encode(t, ids, params.cfg, batch);
  const DecodeOut dec = decode(t, ids, params.cfg, enc.v, t_pred, use_hyper);
  out.assign(batch.size(), PredictionSet(params.cfg.heads, t_pred));
  for (std::size_t k = 0; k < params.cfg.heads; ++k) {
    for (std::size_t step = 0; step < t_pred; ++step) {
      const Tensor& pos = t.val(dec.positions[k][step]);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        out[i].at(k, step, 0) = pos.at2(i, 0);
        out[i].at(k, step, 1) = pos.at2(i, 1);
      }
    }
  }
  return out;
}

double ewta_loss_value(const PredictionSet& pred, const std::vector<traj::Point>& gt,
                       std::size_t k_winners) {
  if (k_winners < 1 || k_winners > pred.heads) {
    throw ContractError("ewta_loss: k_winners out of range");
  }
  if (gt.size() != pred.t_pred) throw ContractError("ewta_loss: horizon mismatch");
  std::vector<std::pair<double, double>> ade_mse(pred.heads);  // (ade, mse)
  for (std::size_t k = 0; k < pred.heads; ++k) {
    double ade = 0.0, mse = 0.0;
    for (std::size_t s = 0; s < pred.t_pred; ++s) {
      const double dx = pred.at(k, s, 0) - gt[s][0];
      const double dy = pred.at(k, s, 1) - gt[s][1];
      const double sq = dx * dx + dy * dy;
      ade += std::sqrt(sq);
      mse += sq;
    }
    ade_mse[k] = {ade / static_cast<double>(pred.t_pred),
                  mse / static_cast<double>(pred.t_pred)};
  }
  std::sort(ade_mse.begin(), ade_mse.end());
  double loss = 0.0;
  for (std::size_t k = 0; k < k_winners; ++k) loss += ade_mse[k].second;
  return loss / static_cast<double>(k_winners);
}

Tape::Id ewta_loss_batch(Tape& t, const DecodeOut& dec,
                         const std::vector<const traj::TrajectorySample*>& batch,
                         std::size_t k_winners, std::vector<double>* per_sample_out) {
  const std::size_t heads = dec.positions.size();
  if (heads == 0 || dec.positions[0].empty()) throw ContractError("ewta_loss: empty decode");
  if (k_winners < 1 || k_winners > heads) {
    throw ContractError("ewta_loss: k_winners out of range");
  }
  const std::size_t r = batch.size();
  const std::size_t t_pred = dec.positions[0].size();

  // Per-head sum of squared distances as tape nodes [r]; per-head ADE as
  // plain numbers for the winner selection.
  std::vector<Tape::Id> head_sq(heads);
  std::vector<std::vector<double>> head_ade(heads, std::vector<double>(r, 0.0));
  for (std::size_t k = 0; k < heads; ++k) {
    Tape::Id acc = Tape::kNone;
    for (std::size_t s = 0; s < t_pred; ++s) {
      Tensor gts({r, 2});
      for (std::size_t i = 0; i < r; ++i) {
        gts.at2(i, 0) = batch[i]->fut[s][0];
        gts.at2(i, 1) = batch[i]->fut[s][1];
      }
      const Tape::Id diff = t.sub(dec.positions[k][s], t.constant(std::move(gts)));
      const Tape::Id sq = t.row_sum(t.mul(diff, diff));
      for (std::size_t i = 0; i < r; ++i) {
        head_ade[k][i] += std::sqrt(t.val(sq)[i]);
      }
      acc = acc == Tape::kNone ? sq : t.add(acc, sq);
    }
    head_sq[k] = t.scale(acc, 1.0 / static_cast<double>(t_pred));  // per-head MSE [r]
  }

  std::vector<Tensor> weights(heads, Tensor({r}));
  std::vector<std::size_t> order(heads);
  const double w = 1.0 / (static_cast<double>(r) * static_cast<double>(k_winners));
  for (std::size_t i = 0; i < r; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double da = head_ade[a][i], db = head_ade[b][i];
      return da != db ? da < db : a < b;
    });
    for (std::size_t k = 0; k < k_winners; ++k) weights[order[k]][i] = w;
    if (per_sample_out) {
      double loss = 0.0;
      for (std::size_t k = 0; k < k_winners; ++k) {
        loss += t.val(head_sq[order[k]])[i];
      }
      per_sample_out->push_back(loss / static_cast<double>(k_winners));
    }
  }
  Tape::Id total = Tape::kNone;
  for (std::size_t k = 0; k < heads; ++k) {
    bool any = false;
    for (std::size_t i = 0; i < r; ++i) {
      if (weights[k][i] != 0.0) {
        any = true;
        break;
      }
    }
    if (!any) continue;
    const Tape::Id term = t.weighted_sum(head_sq[k], std::move(weights[k]));
    total = total == Tape::kNone ? term : t.add(total, term);
  }
  return total;
}

std::vector<std::size_t> ewta_stages(std::size_t heads) {
  std::vector<std::size_t> stages;
  std::size_t k = heads;
  stages.push_back(k);
  while (k > 1) {
    k = (k + 1) / 2;
    stages.push_back(k);
  }
  return stages;
}

}  // namespace fend::pred
