#include <cmath>

#include "doctest.h"
#include "fend/eval.hpp"
#include "fend/extractor.hpp"
#include "fend/grad_check.hpp"
#include "testutil.hpp"

using namespace fend;
using num::Tape;
using num::Tensor;

namespace {

extractor::ExtractorConfig tiny_cfg() {
  extractor::ExtractorConfig cfg;
  cfg.conv_channels = 4;
  cfg.kernel = 3;
  cfg.embed_dim = 16;
  cfg.dec_input = 8;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.lr = 1e-3;
  cfg.pcl_aux_weight = 0.0;
  cfg.levels = {4};
  return cfg;
}

traj::DatasetSplit cv_dataset(std::size_t n, double noise, std::uint64_t seed) {
  traj::SynthConfig s;
  s.n = n;
  s.tail_fraction = 0.01;
  s.seed = seed;
  s.noise_sigma = noise;
  auto split = traj::synth_longtail(s);
  std::erase_if(split.train, [](const auto& x) { return x.pattern_label != 0; });
  std::erase_if(split.test, [](const auto& x) { return x.pattern_label != 0; });
  return split;
}

}  // namespace

TEST_CASE("extract is deterministic and zero weights give a zero embedding") {
  Rng rng(1);
  auto cfg = tiny_cfg();
  auto params = extractor::make_extractor(cfg, rng);
  const auto split = cv_dataset(100, 0.05, 2);
  const auto& s = split.train[0];
  CHECK(extractor::extract(params, s) == extractor::extract(params, s));

  extractor::ExtractorParams zero = params;
  zero.visit([](const std::string&, Tensor& t) {
    for (auto& v : t.vec()) v = 0.0;
  });
  for (const double v : extractor::extract(zero, s)) CHECK(v == 0.0);
}

TEST_CASE("default embedding dimension is 128") {
  Rng rng(2);
  extractor::ExtractorConfig cfg;  // defaults
  auto params = extractor::make_extractor(cfg, rng);
  const auto split = cv_dataset(100, 0.05, 3);
  CHECK(extractor::extract(params, split.train[0]).size() == 128);
}

TEST_CASE("untrained reconstruction has the right shape and stays finite") {
  Rng rng(3);
  auto cfg = tiny_cfg();
  auto params = extractor::make_extractor(cfg, rng);
  const auto split = cv_dataset(100, 0.05, 4);
  const auto emb = extractor::extract(params, split.train[0]);
  const auto rec = extractor::reconstruct(params, emb, 20);
  CHECK(rec.size() == 20);
  for (const auto& p : rec) {
    CHECK(std::isfinite(p[0]));
    CHECK(std::isfinite(p[1]));
  }
}

TEST_CASE("batch extraction matches per-sample extraction") {
  Rng rng(4);
  auto cfg = tiny_cfg();
  auto params = extractor::make_extractor(cfg, rng);
  const auto split = cv_dataset(100, 0.05, 5);
  const auto all = extractor::extract_all(params, split.train);
  for (const std::size_t i : {std::size_t{0}, std::size_t{3}, std::size_t{7}}) {
    const auto one = extractor::extract(params, split.train[i]);
    for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
      CHECK(all.row(i)[e] == doctest::Approx(one[e]).epsilon(1e-12));
    }
  }
}

TEST_CASE("plain autoencoder loss decreases over the first five epochs") {
  auto cfg = tiny_cfg();
  cfg.epochs = 5;
  const auto split = cv_dataset(150, 0.02, 6);
  extractor::ExtractorTrainLog log;
  extractor::train_extractor(split, cfg, 11, &log);
  REQUIRE(log.recon_loss.size() == 5);
  for (std::size_t e = 1; e < log.recon_loss.size(); ++e) {
    CHECK(log.recon_loss[e] < log.recon_loss[e - 1]);
  }
  for (const double v : log.pcl_loss) CHECK(v == 0.0);
}

TEST_CASE("a single noiseless sample is memorized") {
  auto cfg = tiny_cfg();
  cfg.epochs = 4000;
  cfg.batch_size = 1;
  cfg.lr = 3e-3;
  cfg.lr_decay = 5e-4;
  traj::DatasetSplit split = cv_dataset(100, 0.0, 7);
  split.train.resize(1);
  split.test.clear();
  const auto params = extractor::train_extractor(split, cfg, 13);
  CHECK(extractor::mean_reconstruction_error(params, split.train) < 1e-3);
}

TEST_CASE("same seed reproduces identical parameters") {
  auto cfg = tiny_cfg();
  cfg.epochs = 3;
  const auto split = cv_dataset(120, 0.02, 8);
  auto p1 = extractor::train_extractor(split, cfg, 17);
  auto p2 = extractor::train_extractor(split, cfg, 17);
  bool same = true;
  p1.visit([&](const std::string& name, Tensor& t) {
    p2.visit([&](const std::string& name2, Tensor& t2) {
      if (name == name2 && t.vec() != t2.vec()) same = false;
    });
  });
  CHECK(same);
}

TEST_CASE("trained autoencoder reconstructs constant-velocity tracks below 0.05 m") {
  auto cfg = tiny_cfg();
  cfg.embed_dim = 32;
  cfg.dec_input = 16;
  cfg.conv_channels = 8;
  cfg.epochs = 120;
  cfg.batch_size = 32;
  cfg.lr = 3e-3;
  const auto split = cv_dataset(250, 0.0, 9);  // 200 train CV samples, noiseless
  const auto params = extractor::train_extractor(split, cfg, 19);
  CHECK(extractor::mean_reconstruction_error(params, split.train) < 0.05);
}

TEST_CASE("reconstruction loss gradient passes a finite-difference check") {
  Rng rng(5);
  auto cfg = tiny_cfg();
  cfg.conv_channels = 3;
  cfg.embed_dim = 6;
  cfg.dec_input = 4;
  const auto split = cv_dataset(100, 0.05, 10);
  auto params = extractor::make_extractor(cfg, rng);
  std::vector<Tensor> flat;
  params.visit([&](const std::string&, Tensor& t) { flat.push_back(t); });
  const auto& sample = split.train[0];

  const auto build = [&](Tape& t, const std::vector<Tape::Id>& p) {
    // Rebuild the forward pass from marked leaves (visit order).
    std::size_t i = 0;
    const Tape::Id conv_w = p[i++], conv_b = p[i++];
    const nn::LstmIds enc{p[i], p[i + 1], p[i + 2]};
    i += 3;
    const nn::LstmIds dec{p[i], p[i + 1], p[i + 2]};
    i += 3;
    const Tape::Id sx_w = p[i++], sx_b = p[i++], sh_w = p[i++], sh_b = p[i++];
    const Tape::Id out_w = p[i++], out_b = p[i++];

    std::vector<traj::Point> track = sample.obs;
    track.insert(track.end(), sample.fut.begin(), sample.fut.end());
    Tensor disp({1, track.size(), 2});
    for (std::size_t s = 1; s < track.size(); ++s) {
      disp.at3(0, s, 0) = track[s][0] - track[s - 1][0];
      disp.at3(0, s, 1) = track[s][1] - track[s - 1][1];
    }
    const auto conv = t.tanh(t.conv1d_same(t.constant(disp), conv_w, conv_b));
    Tape::Id h = t.constant(Tensor({1, cfg.embed_dim}));
    Tape::Id m = h;
    for (std::size_t s = 0; s < track.size(); ++s) {
      const auto [h2, m2] = nn::lstm_step(t, enc, t.time_slice(conv, s), h, m);
      h = h2;
      m = m2;
    }
    const Tape::Id x = t.linear(h, sx_w, sx_b);
    Tape::Id dh = t.linear(h, sh_w, sh_b);
    Tape::Id dm = t.constant(Tensor({1, cfg.embed_dim}));
    Tape::Id loss = Tape::kNone;
    for (std::size_t s = 0; s < track.size(); ++s) {
      const auto [h2, m2] = nn::lstm_step(t, dec, x, dh, dm);
      dh = h2;
      dm = m2;
      const Tape::Id pos = t.linear(dh, out_w, out_b);
      Tensor target({1, 2}, {track[s][0], track[s][1]});
      const Tape::Id diff = t.sub(pos, t.constant(std::move(target)));
      const Tape::Id sq = t.sum(t.mul(diff, diff));
      loss = loss == Tape::kNone ? sq : t.add(loss, sq);
    }
    return loss;
  };
  CHECK(num::grad_check(build, flat, 1e-5) < 1e-4);
}

TEST_CASE("contrastive auxiliary does not hurt pattern separation") {
  // Mean silhouette of extractor embeddings vs ground-truth pattern labels,
  // aux on vs off, averaged over 3 seeds.
  traj::SynthConfig s;
  s.n = 200;
  s.tail_fraction = 0.5;
  s.noise_sigma = 0.01;

  auto cfg_on = tiny_cfg();
  cfg_on.epochs = 30;
  cfg_on.aux_warmup_epochs = 10;
  cfg_on.lr = 2e-3;
  cfg_on.pcl_aux_weight = 0.03;
  cfg_on.levels = {8};
  auto cfg_off = cfg_on;
  cfg_off.pcl_aux_weight = 0.0;

  const auto mean_silhouette = [&](const extractor::ExtractorConfig& cfg,
                                   std::uint64_t seed) {
    s.seed = seed;
    const auto split = traj::synth_longtail(s);
    const auto params = extractor::train_extractor(split, cfg, seed * 31 + 1);
    const auto emb = extractor::extract_all(params, split.train);
    std::vector<int> labels;
    for (const auto& x : split.train) labels.push_back(x.pattern_label);
    return eval::silhouette_score(emb, labels);
  };

  double on = 0.0, off = 0.0;
  for (const std::uint64_t seed : {1, 2, 3}) {
    on += mean_silhouette(cfg_on, seed);
    off += mean_silhouette(cfg_off, seed);
  }
  CHECK(on / 3.0 >= off / 3.0);
}
