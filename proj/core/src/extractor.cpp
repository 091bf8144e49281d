#include "fend/extractor.hpp"

#include <algorithm>
#include <cmath>

#include "fend/errors.hpp"
#include "fend/optim.hpp"
#include "fend/pcl.hpp"

namespace fend::extractor {

namespace {

std::vector<traj::Point> full_track(const traj::TrajectorySample& s, bool future_enhanced) {
  std::vector<traj::Point> track = s.obs;
  if (future_enhanced) track.insert(track.end(), s.fut.begin(), s.fut.end());
  return track;
}

struct Ids {
  Tape::Id conv_w, conv_b;
  nn::LstmIds enc, dec;
  Tape::Id seed_x_w, seed_x_b, seed_h_w, seed_h_b, out_w, out_b;
};

Ids bind(Tape& t, const ExtractorParams& p, bool as_params) {
  const auto put = [&](const Tensor& x) {
    return as_params ? t.param(x) : t.constant(x);
  };
  Ids ids;
  ids.conv_w = put(p.conv_w);
  ids.conv_b = put(p.conv_b);
  ids.enc = {put(p.enc.wx), put(p.enc.wh), put(p.enc.b)};
  ids.dec = {put(p.dec.wx), put(p.dec.wh), put(p.dec.b)};
  ids.seed_x_w = put(p.seed_x_w);
  ids.seed_x_b = put(p.seed_x_b);
  ids.seed_h_w = put(p.seed_h_w);
  ids.seed_h_b = put(p.seed_h_b);
  ids.out_w = put(p.out_w);
  ids.out_b = put(p.out_b);
  return ids;
}

// [r x T x 2] per-step displacement tensor of the encoded track.
Tensor track_displacements(const std::vector<const traj::TrajectorySample*>& batch,
                           bool future_enhanced) {
  const std::size_t r = batch.size();
  const auto first = full_track(*batch[0], future_enhanced);
  const std::size_t tlen = first.size();
  Tensor x({r, tlen, 2});
  for (std::size_t i = 0; i < r; ++i) {
    const auto track = full_track(*batch[i], future_enhanced);
    if (track.size() != tlen) throw ContractError("extractor: ragged batch");
    for (std::size_t s = 1; s < tlen; ++s) {
      x.at3(i, s, 0) = track[s][0] - track[s - 1][0];
      x.at3(i, s, 1) = track[s][1] - track[s - 1][1];
    }
  }
  return x;
}

// conv -> tanh -> LSTM; returns the final hidden state [r x H].
Tape::Id encode_batch(Tape& t, const Ids& ids, const ExtractorConfig& cfg,
                      const std::vector<const traj::TrajectorySample*>& batch) {
  const std::size_t r = batch.size();
  const Tensor disp = track_displacements(batch, cfg.future_enhanced);
  const std::size_t tlen = disp.dim(1);
  const Tape::Id conv = t.tanh(t.conv1d_same(t.constant(disp), ids.conv_w, ids.conv_b));
  Tape::Id h = t.constant(Tensor({r, cfg.embed_dim}));
  Tape::Id m = h;
  for (std::size_t s = 0; s < tlen; ++s) {
    const auto [h2, m2] = nn::lstm_step(t, ids.enc, t.time_slice(conv, s), h, m);
    h = h2;
    m = m2;
  }
  return h;
}

// Decoder positions per step, seeded from the embedding. The recurrent head
// emits per-step displacements; cumulative sums give the positions.
std::vector<Tape::Id> decode_batch(Tape& t, const Ids& ids, Tape::Id emb,
                                   std::size_t tlen, std::size_t embed_dim) {
  const std::size_t r = t.val(emb).dim(0);
  const Tape::Id x = t.linear(emb, ids.seed_x_w, ids.seed_x_b);
  Tape::Id h = t.linear(emb, ids.seed_h_w, ids.seed_h_b);
  Tape::Id m = t.constant(Tensor({r, embed_dim}));
  std::vector<Tape::Id> out;
  out.reserve(tlen);
  Tape::Id pos = Tape::kNone;
  for (std::size_t s = 0; s < tlen; ++s) {
    const auto [h2, m2] = nn::lstm_step(t, ids.dec, x, h, m);
    h = h2;
    m = m2;
    const Tape::Id disp = t.linear(h, ids.out_w, ids.out_b);
    pos = pos == Tape::kNone ? disp : t.add(pos, disp);
    out.push_back(pos);
  }
  return out;
}

// Mean over samples and steps of the squared position error.
Tape::Id recon_loss(Tape& t, const std::vector<Tape::Id>& dec_pos,
                    const std::vector<const traj::TrajectorySample*>& batch,
                    bool future_enhanced) {
  const std::size_t r = batch.size();
  const std::size_t tlen = dec_pos.size();
  Tape::Id acc = Tape::kNone;
  for (std::size_t s = 0; s < tlen; ++s) {
    Tensor target({r, 2});
    for (std::size_t i = 0; i < r; ++i) {
      const auto track = full_track(*batch[i], future_enhanced);
      target.at2(i, 0) = track[s][0];
      target.at2(i, 1) = track[s][1];
    }
    const Tape::Id diff = t.sub(dec_pos[s], t.constant(std::move(target)));
    const Tape::Id sq = t.row_sum(t.mul(diff, diff));
    acc = acc == Tape::kNone ? sq : t.add(acc, sq);
  }
  return t.scale(t.sum(acc), 1.0 / static_cast<double>(r * tlen));
}

Tape::Id unit_rows(Tape& t, Tape::Id x) {
  const Tape::Id sq = t.mul(x, x);
  const Tape::Id norms = t.sqrt(t.add_const(t.row_sum(sq), 1e-24));
  return t.div_rows(x, norms);
}

}  // namespace

void ExtractorParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("conv.w", conv_w);
  fn("conv.b", conv_b);
  fn("enc.wx", enc.wx);
  fn("enc.wh", enc.wh);
  fn("enc.b", enc.b);
  fn("dec.wx", dec.wx);
  fn("dec.wh", dec.wh);
  fn("dec.b", dec.b);
  fn("seed.x.w", seed_x_w);
  fn("seed.x.b", seed_x_b);
  fn("seed.h.w", seed_h_w);
  fn("seed.h.b", seed_h_b);
  fn("out.w", out_w);
  fn("out.b", out_b);
}

ExtractorParams make_extractor(const ExtractorConfig& cfg, Rng& rng) {
  if (cfg.embed_dim < 2) throw ConfigError("extractor: embed_dim must be >= 2");
  if (cfg.kernel % 2 == 0) throw ConfigError("extractor: kernel must be odd");
  ExtractorParams p;
  p.cfg = cfg;
  const double bound = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.kernel));
  p.conv_w = Tensor({cfg.conv_channels, 2, cfg.kernel});
  for (auto& v : p.conv_w.vec()) v = rng.uniform(-bound, bound);
  p.conv_b = Tensor({cfg.conv_channels});
  for (auto& v : p.conv_b.vec()) v = rng.uniform(-bound, bound);
  p.enc = nn::make_lstm(cfg.conv_channels, cfg.embed_dim, rng);
  p.dec = nn::make_lstm(cfg.dec_input, cfg.embed_dim, rng);
  p.seed_x_w = nn::init_matrix(cfg.dec_input, cfg.embed_dim, rng);
  p.seed_x_b = nn::init_vector(cfg.dec_input, rng, cfg.embed_dim);
  p.seed_h_w = nn::init_matrix(cfg.embed_dim, cfg.embed_dim, rng);
  p.seed_h_b = nn::init_vector(cfg.embed_dim, rng, cfg.embed_dim);
  p.out_w = nn::init_matrix(2, cfg.embed_dim, rng);
  p.out_b = nn::init_vector(2, rng, cfg.embed_dim);
  return p;
}

std::vector<double> extract(const ExtractorParams& params,
                            const traj::TrajectorySample& sample) {
  Tape t;
  const Ids ids = bind(t, params, false);
  const Tape::Id emb = encode_batch(t, ids, params.cfg, {&sample});
  const Tensor& v = t.val(emb);
  return {v.vec().begin(), v.vec().end()};
}

cluster::FeatureMatrix extract_all(const ExtractorParams& params,
                                   const std::vector<traj::TrajectorySample>& samples) {
  cluster::FeatureMatrix out;
  out.rows = samples.size();
  out.cols = params.cfg.embed_dim;
  out.data.resize(out.rows * out.cols);
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    std::vector<const traj::TrajectorySample*> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(&samples[i]);
    Tape t;
    const Ids ids = bind(t, params, false);
    const Tape::Id emb = encode_batch(t, ids, params.cfg, batch);
    const Tensor& v = t.val(emb);
    std::copy(v.vec().begin(), v.vec().end(), out.data.begin() + start * out.cols);
  }
  return out;
}

std::vector<traj::Point> reconstruct(const ExtractorParams& params,
                                     const std::vector<double>& embedding, std::size_t tlen) {
  if (embedding.size() != params.cfg.embed_dim) {
    throw ContractError("reconstruct: embedding dimension mismatch");
  }
  Tape t;
  const Ids ids = bind(t, params, false);
  const Tape::Id emb = t.constant(Tensor({1, params.cfg.embed_dim}, embedding));
  const auto pos = decode_batch(t, ids, emb, tlen, params.cfg.embed_dim);
  std::vector<traj::Point> out;
  out.reserve(tlen);
  for (const Tape::Id id : pos) {
    out.push_back({t.val(id).at2(0, 0), t.val(id).at2(0, 1)});
  }
  return out;
}

ExtractorParams train_extractor(const traj::DatasetSplit& split, const ExtractorConfig& cfg,
                                std::uint64_t seed, ExtractorTrainLog* log) {
  if (split.train.empty()) throw ConfigError("train_extractor: empty training split");
  Rng rng(seed);
  ExtractorParams params = make_extractor(cfg, rng);

  std::vector<Tensor*> param_ptrs;
  params.visit([&](const std::string&, Tensor& t) { param_ptrs.push_back(&t); });
  num::Adam adam({.lr = cfg.lr});

  const std::size_t n = split.train.size();
  const std::size_t batch_size = std::max<std::size_t>(1, std::min(cfg.batch_size, n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const bool use_pcl = cfg.pcl_aux_weight > 0.0 && n >= 10;
  pcl::FeatureBank bank;
  pcl::PCLConfig pcl_cfg;
  pcl_cfg.tau = cfg.tau;
  pcl_cfg.alpha = cfg.alpha;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool aux_active = use_pcl && epoch >= cfg.aux_warmup_epochs;
    if (aux_active) {
      // EM step: re-cluster current embeddings at every epoch start.
      cluster::FeatureMatrix emb = extract_all(params, split.train);
      for (std::size_t i = 0; i < emb.rows; ++i) {
        double s = 0.0;
        for (std::size_t e = 0; e < emb.cols; ++e) s += emb.row(i)[e] * emb.row(i)[e];
        const double inv = 1.0 / std::sqrt(s + 1e-24);
        for (std::size_t e = 0; e < emb.cols; ++e) emb.row(i)[e] *= inv;
      }
      std::vector<std::int64_t> ids(n);
      for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
      cluster::ClusterConfig ccfg;
      ccfg.levels = cfg.levels;
      ccfg.alpha = cfg.alpha;
      const cluster::ClusterModel cm =
          cluster::build_hierarchy(emb, ids, ccfg, rng.fork(epoch + 7).next_u64());
      bank = pcl::FeatureBank(cm, cfg.embed_dim, cfg.alpha);
      bank.init_features(emb);
    }

    rng.shuffle(order);
    double epoch_recon = 0.0, epoch_pcl = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(n, start + batch_size);
      std::vector<const traj::TrajectorySample*> batch;
      std::vector<std::size_t> batch_rows;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&split.train[order[i]]);
        batch_rows.push_back(order[i]);
      }
      Tape t;
      const Ids ids = bind(t, params, true);
      const Tape::Id emb = encode_batch(t, ids, cfg, batch);
      const std::size_t tlen = full_track(*batch[0], cfg.future_enhanced).size();
      const auto dec_pos = decode_batch(t, ids, emb, tlen, cfg.embed_dim);
      Tape::Id loss = recon_loss(t, dec_pos, batch, cfg.future_enhanced);
      epoch_recon += t.val(loss).item();
      if (aux_active && batch.size() >= 2) {
        const Tape::Id feats = unit_rows(t, emb);
        const Tape::Id aux = pcl::protonce(t, feats, batch_rows, bank, pcl_cfg);
        epoch_pcl += t.val(aux).item();
        loss = t.add(loss, t.scale(aux, cfg.pcl_aux_weight));
      }
      t.backward(loss);
      std::vector<Tensor*> ps;
      params.visit([&](const std::string&, Tensor& tensor) { ps.push_back(&tensor); });
      // bind() order matches visit() order.
      const std::vector<Tape::Id> grad_ids = {
          ids.conv_w, ids.conv_b, ids.enc.wx, ids.enc.wh, ids.enc.b,
          ids.dec.wx, ids.dec.wh, ids.dec.b, ids.seed_x_w, ids.seed_x_b,
          ids.seed_h_w, ids.seed_h_b, ids.out_w, ids.out_b};
      std::vector<const Tensor*> gs;
      gs.reserve(grad_ids.size());
      for (const Tape::Id gid : grad_ids) gs.push_back(&t.grad(gid));
      adam.step(ps, gs, std::exp(-cfg.lr_decay * static_cast<double>(epoch)));
      ++batches;
    }
    if (log) {
      log->recon_loss.push_back(epoch_recon / static_cast<double>(batches));
      log->pcl_loss.push_back(epoch_pcl / static_cast<double>(batches));
    }
  }
  return params;
}

double mean_reconstruction_error(const ExtractorParams& params,
                                 const std::vector<traj::TrajectorySample>& samples) {
  if (samples.empty()) throw ContractError("mean_reconstruction_error: no samples");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    const auto emb = extract(params, s);
    const auto track = full_track(s, params.cfg.future_enhanced);
    const auto rec = reconstruct(params, emb, track.size());
    for (std::size_t i = 0; i < track.size(); ++i) {
      const double dx = rec[i][0] - track[i][0];
      const double dy = rec[i][1] - track[i][1];
      total += std::sqrt(dx * dx + dy * dy);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace fend::extractor
