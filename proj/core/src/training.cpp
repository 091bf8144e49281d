#include "fend/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "fend/errors.hpp"
#include "fend/optim.hpp"
#include "json.hpp"

namespace fend::train {

void apply_desk_schedule(TrainConfig& cfg, std::size_t n_train) {
  const long long stage = std::clamp<long long>(
      std::llround(80000.0 / static_cast<double>(std::max<std::size_t>(1, n_train))), 4, 20);
  const std::size_t stages = pred::ewta_stages(cfg.predictor.heads).size();
  cfg.epochs = static_cast<std::size_t>(stage) * stages;
  cfg.warmup_epochs = static_cast<std::size_t>(stage) * (stages / 2);
  cfg.a_switch_epoch = static_cast<std::size_t>(stage);
}

double a_weight(const TrainConfig& cfg, std::size_t epochs_after_warmup) {
  return epochs_after_warmup < cfg.a_switch_epoch ? cfg.a_initial : cfg.a_late;
}

double lr_at(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr * std::exp(-cfg.lr_decay * static_cast<double>(epoch));
}

std::size_t k_winners_at(const TrainConfig& cfg, std::size_t epoch) {
  const auto stages = pred::ewta_stages(cfg.predictor.heads);
  const std::size_t stage_epochs = std::max<std::size_t>(1, cfg.epochs / stages.size());
  return stages[std::min(epoch / stage_epochs, stages.size() - 1)];
}

GateMask compute_gate(const traj::DatasetSplit& split, const pred::PredictorParams& params,
                      double theta, std::size_t k_winners, bool use_hyper) {
  GateMask mask;
  mask.theta = theta;
  mask.active.reserve(split.train.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < split.train.size(); start += kChunk) {
    const std::size_t end = std::min(split.train.size(), start + kChunk);
    std::vector<const traj::TrajectorySample*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&split.train[i]);
    const auto preds = pred::predict_batch(params, batch, split.t_pred, use_hyper);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const double loss = pred::ewta_loss_value(preds[i], batch[i]->fut, k_winners);
      mask.active.push_back(loss > theta);
    }
  }
  mask.frozen = true;
  return mask;
}

cluster::FeatureMatrix project_features(const pred::PredictorParams& params,
                                        const std::vector<traj::TrajectorySample>& samples) {
  cluster::FeatureMatrix out;
  out.rows = samples.size();
  out.cols = params.cfg.proj_dim;
  out.data.resize(out.rows * out.cols);
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    std::vector<const traj::TrajectorySample*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&samples[i]);
    num::Tape t;
    const pred::PredictorIds ids = pred::bind_const(t, params);
    const pred::EncodeOut enc = pred::encode(t, ids, params.cfg, batch);
    const num::Tensor& v = t.val(enc.projected);
    std::copy(v.vec().begin(), v.vec().end(), out.data.begin() + start * out.cols);
  }
  return out;
}

BatchLoss total_loss(num::Tape& t, const pred::PredictorIds& ids, const TrainConfig& cfg,
                     const std::vector<const traj::TrajectorySample*>& batch,
                     const std::vector<std::size_t>& bank_rows,
                     const pcl::FeatureBank* bank, const GateMask* gate,
                     const std::vector<bool>* batch_active, std::size_t epoch,
                     std::vector<double>* per_sample_ewta,
                     pred::EncodeOut* encode_out) {
  const std::size_t t_pred = batch[0]->fut.size();
  const pred::EncodeOut enc = pred::encode(t, ids, cfg.predictor, batch);
  if (encode_out) *encode_out = enc;
  const pred::DecodeOut dec =
      pred::decode(t, ids, cfg.predictor, enc.v, t_pred, cfg.use_hyper);
  const std::size_t k = k_winners_at(cfg, epoch);
  BatchLoss out;
  out.loss = pred::ewta_loss_batch(t, dec, batch, k, per_sample_ewta);
  out.ewta_value = t.val(out.loss).item();

  const bool gated_phase = epoch >= cfg.warmup_epochs && cfg.use_pcl && bank != nullptr &&
                           gate != nullptr && gate->frozen;
  if (!gated_phase || batch.size() < 2) return out;

  bool any_active = false;
  for (const bool b : *batch_active) any_active |= b;
  if (!any_active) return out;

  const num::Tape::Id pcl_id =
      pcl::protonce(t, enc.projected, bank_rows, *bank, cfg.pcl, batch_active);
  out.pcl_value = t.val(pcl_id).item();
  const double a = a_weight(cfg, epoch - cfg.warmup_epochs);
  if (a != 0.0) {
    out.loss = t.add(out.loss, t.scale(pcl_id, a));
  }
  return out;
}

namespace {

eval::BucketReport self_bucketed_val(const pred::PredictorParams& params,
                                     const traj::DatasetSplit& split, bool use_hyper) {
  std::vector<eval::SampleMetrics> metrics;
  std::vector<double> fdes;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < split.test.size(); start += kChunk) {
    const std::size_t end = std::min(split.test.size(), start + kChunk);
    std::vector<const traj::TrajectorySample*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&split.test[i]);
    const auto preds = pred::predict_batch(params, batch, split.t_pred, use_hyper);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      // Metrics in raw coordinates (FDE/ADE are invariant to the rigid
      // normalization, so the normalized frame gives the same numbers).
      const auto m = eval::min_ade_fde(preds[i], batch[i]->fut);
      metrics.push_back(m);
      fdes.push_back(m.min_fde);
    }
  }
  return eval::bucket_by_baseline(fdes, metrics);
}

}  // namespace

TrainResult train_fend(const traj::DatasetSplit& split,
                       const cluster::ClusterModel& cluster_model, const TrainConfig& cfg) {
  // Config validation up front, before any training step.
  if (split.train.empty()) throw ConfigError("train_fend: empty training split");
  if (cfg.epochs == 0 || cfg.warmup_epochs >= cfg.epochs) {
    throw ConfigError("train_fend: need warmup_epochs < epochs");
  }
  if (cfg.theta < 0.0 || cfg.a_initial < 0.0 || cfg.a_late < 0.0) {
    throw ConfigError("train_fend: negative schedule constants");
  }
  if (cfg.use_pcl) {
    if (cluster_model.sample_ids.size() != split.train.size()) {
      throw ConfigError("train_fend: cluster model does not cover the training split");
    }
    std::unordered_set<std::int64_t> ids(cluster_model.sample_ids.begin(),
                                         cluster_model.sample_ids.end());
    for (const auto& s : split.train) {
      if (!ids.count(s.sample_id)) {
        throw ConfigError("train_fend: train sample " + std::to_string(s.sample_id) +
                          " missing from cluster model");
      }
    }
  }

  Rng rng(cfg.seed);
  TrainResult res;
  res.params = pred::make_predictor(cfg.predictor, rng);

  std::vector<num::Tensor*> param_ptrs;
  res.params.visit([&](const std::string&, num::Tensor& t) { param_ptrs.push_back(&t); });
  num::Adam adam({.lr = cfg.lr});

  const std::size_t n = split.train.size();
  const std::size_t batch_size = std::max<std::size_t>(1, std::min(cfg.batch_size, n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  pcl::FeatureBank bank;
  bool bank_ready = false;
  // Bank row of each train index (identity when the cluster model was built
  // in train order).
  std::vector<std::size_t> bank_row_of(n, 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch == cfg.warmup_epochs) {
      res.warmup_params = res.params;
      res.gate = compute_gate(split, res.params, cfg.theta, k_winners_at(cfg, epoch),
                              cfg.use_hyper);
      if (cfg.use_pcl) {
        bank = pcl::FeatureBank(cluster_model, cfg.predictor.proj_dim, cfg.pcl.alpha);
        bank.init_features(project_features(res.params, split.train));
        for (std::size_t i = 0; i < n; ++i) {
          bank_row_of[i] = bank.row_of(split.train[i].sample_id);
        }
        bank_ready = true;
      }
    }

    rng.shuffle(order);
    const double lr_scale = std::exp(-cfg.lr_decay * static_cast<double>(epoch));
    double ewta_sum = 0.0, pcl_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(n, start + batch_size);
      std::vector<const traj::TrajectorySample*> batch;
      std::vector<std::size_t> bank_rows;
      std::vector<bool> active;
      std::vector<std::int64_t> batch_ids;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t row = order[i];
        batch.push_back(&split.train[row]);
        batch_ids.push_back(split.train[row].sample_id);
        if (bank_ready) {
          bank_rows.push_back(bank_row_of[row]);
          active.push_back(res.gate.active[row]);
        }
      }
      num::Tape t;
      pred::PredictorIds ids = pred::mark_params(t, res.params);
      pred::EncodeOut enc;
      BatchLoss bl;
      try {
        bl = total_loss(t, ids, cfg, batch, bank_rows, bank_ready ? &bank : nullptr,
                        &res.gate, bank_ready ? &active : nullptr, epoch, nullptr, &enc);
        t.backward(bl.loss);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " [epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(n_batches) + ", lr_scale " +
                           std::to_string(lr_scale) + "]");
      }
      ewta_sum += bl.ewta_value * static_cast<double>(batch.size());
      pcl_sum += bl.pcl_value * static_cast<double>(batch.size());

      std::vector<const num::Tensor*> grads;
      grads.reserve(param_ptrs.size());
      std::vector<num::Tape::Id> grad_ids;
      grad_ids.reserve(param_ptrs.size());
      const auto collect = [&](num::Tape::Id id) { grad_ids.push_back(id); };
      collect(ids.enc.wx);
      collect(ids.enc.wh);
      collect(ids.enc.b);
      collect(ids.proj_w);
      collect(ids.proj_b);
      collect(ids.hyper1_w);
      collect(ids.hyper1_b);
      for (int z = 0; z < 6; ++z) {
        collect(ids.hyper_out_w[z]);
        collect(ids.hyper_out_b[z]);
      }
      for (int g = 0; g < 4; ++g) {
        collect(ids.gates[g].w_h);
        collect(ids.gates[g].w_x);
        collect(ids.gates[g].w_hz);
        collect(ids.gates[g].w_xz);
        collect(ids.gates[g].w_bz);
        collect(ids.gates[g].b0);
      }
      collect(ids.seed_x_w);
      collect(ids.seed_x_b);
      collect(ids.seed_h_w);
      collect(ids.seed_h_b);
      for (std::size_t k = 0; k < ids.head_w.size(); ++k) {
        collect(ids.head_w[k]);
        collect(ids.head_b[k]);
      }
      for (const num::Tape::Id gid : grad_ids) grads.push_back(&t.grad(gid));
      adam.step(param_ptrs, grads, lr_scale);

      if (bank_ready) {
        cluster::FeatureMatrix feats;
        feats.rows = batch.size();
        feats.cols = cfg.predictor.proj_dim;
        const num::Tensor& pv = t.val(enc.projected);
        feats.data.assign(pv.vec().begin(), pv.vec().end());
        bank.update(batch_ids, feats, cfg.pcl.momentum_beta);
      }
      ++n_batches;
    }
    if (bank_ready && cfg.pcl.refresh_every > 0 &&
        (epoch - cfg.warmup_epochs) % cfg.pcl.refresh_every == 0) {
      bank.refresh();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.ewta_loss = ewta_sum / static_cast<double>(n);
    rec.pcl_loss = pcl_sum / static_cast<double>(n);
    rec.a = epoch >= cfg.warmup_epochs && cfg.use_pcl
                ? a_weight(cfg, epoch - cfg.warmup_epochs)
                : 0.0;
    rec.lr = lr_at(cfg, epoch);
    rec.k_winners = k_winners_at(cfg, epoch);
    if (!split.test.empty() && cfg.val_every > 0 &&
        (epoch % cfg.val_every == 0 || epoch + 1 == cfg.epochs)) {
      rec.has_val = true;
      rec.val = self_bucketed_val(res.params, split, cfg.use_hyper);
    }
    res.log.push_back(rec);
  }
  return res;
}

void save_run_log(const std::vector<EpochRecord>& log, const GateMask& gate,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  const auto bucket_json = [](const eval::BucketReport& rep) {
    nlohmann::ordered_json v;
    const auto put = [&](const std::string& key, const eval::BucketStats& s) {
      v[key] = {{"ade", s.min_ade}, {"fde", s.min_fde}, {"n", s.n}};
    };
    for (int p = 0; p < 5; ++p) put("top" + std::to_string(p + 1), rep.top[p]);
    put("rest", rep.rest);
    put("all", rep.all);
    return v;
  };
  for (const EpochRecord& r : log) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["ewta_loss"] = r.ewta_loss;
    j["pcl_loss"] = r.pcl_loss;
    j["a"] = r.a;
    j["lr"] = r.lr;
    j["k_winners"] = r.k_winners;
    if (r.has_val) {
      j["val"] = bucket_json(r.val);
    } else {
      j["val"] = nullptr;
    }
    out << j.dump() << "\n";
  }
  if (gate.frozen) {
    nlohmann::ordered_json j;
    j["gate"] = {{"theta", gate.theta},
                 {"n_active", gate.n_active()},
                 {"n_total", gate.active.size()}};
    out << j.dump() << "\n";
  }
}

}  // namespace fend::train
