#include "pipeline.hpp"

#include <fstream>

#include "fend/errors.hpp"
#include "fend/eval.hpp"
#include "fend/kalman.hpp"
#include "fend/serialize.hpp"
#include "fend/training.hpp"

namespace fend::pipe {

namespace {

namespace fs = std::filesystem;

nlohmann::ordered_json extractor_cfg_json(const extractor::ExtractorConfig& c) {
  return {{"conv_channels", c.conv_channels}, {"kernel", c.kernel},
          {"embed_dim", c.embed_dim},         {"dec_input", c.dec_input},
          {"epochs", c.epochs},               {"batch_size", c.batch_size},
          {"lr", c.lr},                       {"lr_decay", c.lr_decay},
          {"pcl_aux_weight", c.pcl_aux_weight},
          {"aux_warmup_epochs", c.aux_warmup_epochs},
          {"levels", c.levels},               {"tau", c.tau},
          {"alpha", c.alpha},                 {"future_enhanced", c.future_enhanced}};
}

extractor::ExtractorConfig extractor_cfg_from_json(const nlohmann::json& j) {
  extractor::ExtractorConfig c;
  c.conv_channels = j.at("conv_channels").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.dec_input = j.at("dec_input").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.pcl_aux_weight = j.at("pcl_aux_weight").get<double>();
  c.aux_warmup_epochs = j.at("aux_warmup_epochs").get<std::size_t>();
  c.levels = j.at("levels").get<std::vector<std::size_t>>();
  c.tau = j.at("tau").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.future_enhanced = j.at("future_enhanced").get<bool>();
  return c;
}

nlohmann::ordered_json predictor_cfg_json(const pred::PredictorConfig& c) {
  return {{"enc_hidden", c.enc_hidden}, {"dec_hidden", c.dec_hidden},
          {"dec_input", c.dec_input},   {"hyper_hidden", c.hyper_hidden},
          {"hyper_embed", c.hyper_embed}, {"heads", c.heads},
          {"proj_dim", c.proj_dim}};
}

pred::PredictorConfig predictor_cfg_from_json(const nlohmann::json& j) {
  pred::PredictorConfig c;
  c.enc_hidden = j.at("enc_hidden").get<std::size_t>();
  c.dec_hidden = j.at("dec_hidden").get<std::size_t>();
  c.dec_input = j.at("dec_input").get<std::size_t>();
  c.hyper_hidden = j.at("hyper_hidden").get<std::size_t>();
  c.hyper_embed = j.at("hyper_embed").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.proj_dim = j.at("proj_dim").get<std::size_t>();
  return c;
}

template <typename Params>
std::vector<std::pair<std::string, const num::Tensor*>> named_tensors(Params& p) {
  std::vector<std::pair<std::string, const num::Tensor*>> out;
  p.visit([&](const std::string& name, num::Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

template <typename Params>
void fill_from_checkpoint(Params& p, const io::Checkpoint& ckpt,
                          const std::string& where) {
  p.visit([&](const std::string& name, num::Tensor& t) {
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) {
      throw FormatError(where + ": checkpoint missing tensor " + name);
    }
    if (it->second.shape() != t.shape()) {
      throw FormatError(where + ": tensor " + name + " has shape " +
                        it->second.shape_str() + ", expected " + t.shape_str());
    }
    t = it->second;
  });
}

// Stage skip/refuse logic: returns true when the stage output can be reused.
bool check_stage(const fs::path& path, const std::string& hash, bool force,
                 const LogFn& log) {
  if (!fs::exists(path)) return false;
  try {
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    const std::string stored = j.value("config_hash", "");
    if (stored == hash) {
      log("  [skip] " + path.filename().string() + " (checkpoint matches config)");
      return true;
    }
    if (!force) {
      throw ConfigError(path.string() +
                        ": stale checkpoint (config hash mismatch); rerun with --force");
    }
    log("  [force] recomputing " + path.filename().string());
    return false;
  } catch (const nlohmann::json::exception&) {
    if (!force) {
      throw ConfigError(path.string() + ": unreadable checkpoint; rerun with --force");
    }
    return false;
  }
}

std::vector<eval::SampleMetrics> test_metrics_raw(const pred::PredictorParams& params,
                                                  const traj::DatasetSplit& split,
                                                  bool use_hyper) {
  std::vector<eval::SampleMetrics> out;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < split.test.size(); start += kChunk) {
    const std::size_t end = std::min(split.test.size(), start + kChunk);
    std::vector<const traj::TrajectorySample*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&split.test[i]);
    const auto preds = pred::predict_batch(params, batch, split.t_pred, use_hyper);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      // Denormalize into raw map coordinates before measuring.
      pred::PredictionSet raw = preds[i];
      for (std::size_t k = 0; k < raw.heads; ++k) {
        std::vector<traj::Point> track(raw.t_pred);
        for (std::size_t s = 0; s < raw.t_pred; ++s) {
          track[s] = {raw.at(k, s, 0), raw.at(k, s, 1)};
        }
        const auto den = traj::denormalize(*batch[i], track);
        for (std::size_t s = 0; s < raw.t_pred; ++s) {
          raw.at(k, s, 0) = den[s][0];
          raw.at(k, s, 1) = den[s][1];
        }
      }
      out.push_back(eval::min_ade_fde(raw, traj::raw_fut(*batch[i])));
    }
  }
  return out;
}

void write_eval_artifacts(const cfg::RunConfig& cfg, const fs::path& run_dir,
                          const traj::DatasetSplit& split,
                          const pred::PredictorParams& baseline,
                          const pred::PredictorParams& model, bool model_use_hyper,
                          const cluster::ClusterModel& clusters, const LogFn& log) {
  const auto base_metrics = test_metrics_raw(baseline, split, false);
  const auto model_metrics = test_metrics_raw(model, split, model_use_hyper);
  std::vector<double> base_fdes;
  base_fdes.reserve(base_metrics.size());
  for (const auto& m : base_metrics) base_fdes.push_back(m.min_fde);

  const eval::BucketReport base_rep = eval::bucket_by_baseline(base_fdes, base_metrics);
  const eval::BucketReport model_rep = eval::bucket_by_baseline(base_fdes, model_metrics);
  eval::save_bucket_csv({{"baseline", base_rep}, {"fend", model_rep}},
                        run_dir / "report.csv");

  {
    std::ofstream out(run_dir / "report_diff.csv");
    out << "bucket,ade_change_pct,fde_change_pct\n";
    const auto row = [&](const std::string& name, const eval::BucketStats& b,
                         const eval::BucketStats& m) {
      char buf[96];
      const double ade = b.min_ade > 0 ? 100.0 * (m.min_ade - b.min_ade) / b.min_ade : 0.0;
      const double fde = b.min_fde > 0 ? 100.0 * (m.min_fde - b.min_fde) / b.min_fde : 0.0;
      std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f\n", name.c_str(), ade, fde);
      out << buf;
    };
    for (int p = 0; p < 5; ++p) {
      row("top" + std::to_string(p + 1), base_rep.top[p], model_rep.top[p]);
    }
    row("rest", base_rep.rest, model_rep.rest);
    row("all", base_rep.all, model_rep.all);
  }

  std::vector<double> model_fdes;
  for (const auto& m : model_metrics) model_fdes.push_back(m.min_fde);
  eval::save_cdf_txt(eval::fde_cdf(base_fdes, cfg.cdf_bins), run_dir / "cdf_baseline.txt");
  eval::save_cdf_txt(eval::fde_cdf(model_fdes, cfg.cdf_bins), run_dir / "cdf_fend.txt");

  // Embedding diagnostics on the training split: projected features vs the
  // finest-level pseudo labels.
  const auto feats = train::project_features(model, split.train);
  std::size_t finest = 0;
  for (std::size_t m = 0; m < clusters.levels.size(); ++m) {
    if (clusters.levels[m].k >= clusters.levels[finest].k) finest = m;
  }
  std::vector<int> labels(split.train.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<int>(clusters.levels[finest].assignments[i]);
  }
  eval::save_separation_json(eval::separation_stats(feats, labels),
                             run_dir / "separation.json");
  const auto pca = eval::pca2d(feats);
  {
    std::ofstream out(run_dir / "pca.csv");
    out << "sample_id,pc1,pc2\n";
    char buf[80];
    for (std::size_t i = 0; i < pca.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f\n",
                    static_cast<long long>(split.train[i].sample_id), pca[i][0], pca[i][1]);
      out << buf;
    }
  }

  // Kalman hardness scores for the alternative tail division.
  std::vector<std::int64_t> test_ids;
  for (const auto& s : split.test) test_ids.push_back(s.sample_id);
  io::save_scores_csv(run_dir / "kalman.csv", "kalman_fde",
                      test_ids, kalman::kalman_scores(split, cfg.kalman));
  log("  wrote report.csv, report_diff.csv, cdf_*.txt, separation.json, pca.csv, kalman.csv");
}

}  // namespace

void save_extractor_ckpt(const fs::path& path, const extractor::ExtractorParams& params,
                         const std::string& config_hash) {
  auto p = const_cast<extractor::ExtractorParams&>(params);
  io::save_checkpoint(path, "extractor", config_hash, extractor_cfg_json(params.cfg),
                      named_tensors(p));
}

extractor::ExtractorParams load_extractor_ckpt(const fs::path& path) {
  const io::Checkpoint ckpt = io::load_checkpoint(path);
  if (ckpt.kind != "extractor") throw FormatError(path.string() + ": not an extractor checkpoint");
  Rng rng(0);
  extractor::ExtractorParams params =
      extractor::make_extractor(extractor_cfg_from_json(ckpt.config), rng);
  fill_from_checkpoint(params, ckpt, path.string());
  return params;
}

void save_predictor_ckpt(const fs::path& path, const pred::PredictorParams& params,
                         const std::string& config_hash, bool use_hyper) {
  auto p = const_cast<pred::PredictorParams&>(params);
  nlohmann::ordered_json cfg = predictor_cfg_json(params.cfg);
  cfg["use_hyper"] = use_hyper;
  io::save_checkpoint(path, "predictor", config_hash, cfg, named_tensors(p));
}

pred::PredictorParams load_predictor_ckpt(const fs::path& path, bool* use_hyper) {
  const io::Checkpoint ckpt = io::load_checkpoint(path);
  if (ckpt.kind != "predictor") throw FormatError(path.string() + ": not a predictor checkpoint");
  Rng rng(0);
  pred::PredictorParams params =
      pred::make_predictor(predictor_cfg_from_json(ckpt.config), rng);
  fill_from_checkpoint(params, ckpt, path.string());
  if (use_hyper) *use_hyper = ckpt.config.value("use_hyper", true);
  return params;
}

std::filesystem::path run_pipeline(const cfg::RunConfig& cfg_in, bool force, const LogFn& log) {
  cfg::RunConfig cfg = cfg_in;
  if (!fs::exists(cfg.dataset)) {
    throw ConfigError("dataset not found: " + cfg.dataset.string());
  }
  traj::DatasetSplit split = traj::load_dataset_json(cfg.dataset);
  if (cfg.preset == "desk") {
    train::apply_desk_schedule(cfg.train, split.train.size());
  }
  const std::string hash = cfg::config_hash(cfg);
  const fs::path run_dir = cfg.out_dir / ("run-" + hash);
  fs::create_directories(run_dir);
  {
    std::ofstream out(run_dir / "config.json");
    out << cfg::run_config_to_json(cfg).dump(1) << "\n";
  }
  log("run dir: " + run_dir.string());
  log("train/test samples: " + std::to_string(split.train.size()) + "/" +
      std::to_string(split.test.size()));

  // Stage 1: trajectory feature extractor.
  const fs::path ext_path = run_dir / "extractor.ckpt.json";
  extractor::ExtractorParams ext;
  if (check_stage(ext_path, hash, force, log)) {
    ext = load_extractor_ckpt(ext_path);
  } else {
    log("[stage extractor] training autoencoder (" +
        std::to_string(cfg.extractor.epochs) + " epochs)");
    ext = extractor::train_extractor(split, cfg.extractor, cfg.seed);
    save_extractor_ckpt(ext_path, ext, hash);
  }

  // Stage 2: hierarchical clustering of full-trajectory embeddings.
  const fs::path clu_path = run_dir / "clusters.json";
  cluster::ClusterModel clusters;
  if (check_stage(clu_path, hash, force, log)) {
    clusters = cluster::load_cluster_json(clu_path);
  } else {
    log("[stage cluster] embedding " + std::to_string(split.train.size()) +
        " samples and building the hierarchy");
    const auto emb = extractor::extract_all(ext, split.train);
    std::vector<std::int64_t> ids;
    for (const auto& s : split.train) ids.push_back(s.sample_id);
    clusters = cluster::build_hierarchy(emb, ids, cfg.cluster, cfg.seed + 1);
    {
      // The cluster file carries the config hash next to the model itself.
      cluster::save_cluster_json(clusters, clu_path);
      nlohmann::json j;
      std::ifstream in(clu_path);
      in >> j;
      j["config_hash"] = hash;
      std::ofstream out(clu_path);
      out << j.dump(1) << "\n";
    }
    cluster::save_assignments_csv(clusters, run_dir / "assignments.csv");
    io::save_embeddings_csv(run_dir / "embeddings.csv", ids, emb);
  }

  // Stage 3: baseline ablation (no PCL, no hypernetwork) for bucketing.
  train::TrainConfig base_cfg = cfg.train;
  base_cfg.seed = cfg.seed;
  base_cfg.use_pcl = false;
  base_cfg.use_hyper = false;
  const fs::path base_path = run_dir / "baseline.ckpt.json";
  pred::PredictorParams baseline;
  if (check_stage(base_path, hash, force, log)) {
    baseline = load_predictor_ckpt(base_path);
  } else {
    log("[stage baseline] training the no-PCL/no-hyper ablation (" +
        std::to_string(base_cfg.epochs) + " epochs)");
    train::TrainResult res = train::train_fend(split, clusters, base_cfg);
    baseline = std::move(res.params);
    save_predictor_ckpt(base_path, baseline, hash, false);
    train::save_run_log(res.log, res.gate, run_dir / "baseline_log.jsonl");
  }

  // Stage 4: the configured model (full FEND unless ablated).
  train::TrainConfig fend_cfg = cfg.train;
  fend_cfg.seed = cfg.seed;
  const fs::path fend_path = run_dir / "fend.ckpt.json";
  pred::PredictorParams model;
  if (check_stage(fend_path, hash, force, log)) {
    model = load_predictor_ckpt(fend_path);
  } else {
    log("[stage fend] training with use_pcl=" + std::to_string(fend_cfg.use_pcl) +
        " use_hyper=" + std::to_string(fend_cfg.use_hyper) + " (" +
        std::to_string(fend_cfg.epochs) + " epochs)");
    train::TrainResult res = train::train_fend(split, clusters, fend_cfg);
    model = std::move(res.params);
    save_predictor_ckpt(fend_path, model, hash, fend_cfg.use_hyper);
    train::save_run_log(res.log, res.gate, run_dir / "fend_log.jsonl");
  }

  // Stage 5: evaluation artifacts.
  log("[stage eval] measuring test metrics and writing reports");
  write_eval_artifacts(cfg, run_dir, split, baseline, model, fend_cfg.use_hyper, clusters,
                       log);
  return run_dir;
}

void run_eval(const cfg::RunConfig& cfg_in, const LogFn& log) {
  cfg::RunConfig cfg = cfg_in;
  traj::DatasetSplit split = traj::load_dataset_json(cfg.dataset);
  if (cfg.preset == "desk") {
    train::apply_desk_schedule(cfg.train, split.train.size());
  }
  const std::string hash = cfg::config_hash(cfg);
  const fs::path run_dir = cfg.out_dir / ("run-" + hash);
  const fs::path base_path = run_dir / "baseline.ckpt.json";
  const fs::path fend_path = run_dir / "fend.ckpt.json";
  const fs::path clu_path = run_dir / "clusters.json";
  for (const fs::path& p : {base_path, fend_path, clu_path}) {
    if (!fs::exists(p)) {
      throw ConfigError("missing checkpoint: " + p.string() + " (run the pipeline first)");
    }
  }
  const pred::PredictorParams baseline = load_predictor_ckpt(base_path);
  bool use_hyper = true;
  const pred::PredictorParams model = load_predictor_ckpt(fend_path, &use_hyper);
  const cluster::ClusterModel clusters = cluster::load_cluster_json(clu_path);
  write_eval_artifacts(cfg, run_dir, split, baseline, model, use_hyper, clusters, log);
}

}  // namespace fend::pipe
