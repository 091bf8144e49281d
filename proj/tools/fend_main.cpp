// fend - long-tail trajectory prediction pipeline driver.
//
// Subcommands:
//   synth     generate a synthetic long-tail dataset (JSON)
//   convert   import ETH-UCY-style text files into the dataset format
//   pipeline  extractor -> clustering -> baseline + model training -> reports
//   eval      recompute reports from existing checkpoints
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "fend/config.hpp"
#include "fend/errors.hpp"
#include "fend/trajdata.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;

namespace {

void require_writable(const fs::path& out, bool force) {
  if (fs::exists(out) && !force) {
    throw fend::ConfigError(out.string() + " already exists (use --force to overwrite)");
  }
}

int run_synth(const fs::path& out, std::size_t n, double tail, std::uint64_t seed,
              std::size_t t_obs, std::size_t t_pred, double dt, double noise, bool force) {
  require_writable(out, force);
  fend::traj::SynthConfig cfg;
  cfg.n = n;
  cfg.tail_fraction = tail;
  cfg.seed = seed;
  cfg.t_obs = t_obs;
  cfg.t_pred = t_pred;
  cfg.dt = dt;
  cfg.noise_sigma = noise;
  const auto split = fend::traj::synth_longtail(cfg);
  fend::traj::save_dataset_json(split, out, "synthetic");
  std::printf("wrote %s (%zu train, %zu test)\n", out.string().c_str(), split.train.size(),
              split.test.size());
  return 0;
}

int run_convert(const fs::path& in, const fs::path& test_in, double holdout,
                std::size_t t_obs, std::size_t t_pred, double dt, std::uint64_t seed,
                const fs::path& out, bool force) {
  require_writable(out, force);
  auto split = fend::traj::load_ethucy_text(in, t_obs, t_pred, dt);
  if (!test_in.empty()) {
    auto test_split = fend::traj::load_ethucy_text(test_in, t_obs, t_pred, dt);
    // Re-number test ids after the train ids.
    std::int64_t next = 0;
    for (const auto& s : split.train) next = std::max(next, s.sample_id + 1);
    for (auto& s : test_split.train) s.sample_id += next;
    split.test = std::move(test_split.train);
  } else if (holdout > 0.0) {
    fend::traj::split_holdout(split, holdout, seed);
  }
  fend::traj::save_dataset_json(split, out, "text");
  std::printf("wrote %s (%zu train, %zu test)\n", out.string().c_str(), split.train.size(),
              split.test.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FEND long-tail trajectory prediction pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic long-tail dataset");
  std::size_t n = 1000, t_obs = 8, t_pred = 12;
  double tail = 0.1, dt = 0.4, noise = 0.05;
  std::uint64_t seed = 0;
  fs::path out;
  bool force = false;
  synth->add_option("--n", n, "number of samples (>= 100)");
  synth->add_option("--tail", tail, "tail fraction in (0,1)");
  synth->add_option("--seed", seed, "rng seed")->required();
  synth->add_option("--t-obs", t_obs, "observed steps");
  synth->add_option("--t-pred", t_pred, "predicted steps");
  synth->add_option("--dt", dt, "seconds per step");
  synth->add_option("--noise", noise, "position noise sigma (m)");
  synth->add_option("--out", out, "output dataset path")->required();
  synth->add_flag("--force", force, "overwrite an existing output file");

  // convert
  auto* convert = app.add_subcommand("convert", "Convert ETH-UCY text files to a dataset");
  fs::path conv_in, conv_test_in, conv_out;
  double holdout = 0.2;
  convert->add_option("--in", conv_in, "train text file (frame_id agent_id x y)")->required();
  convert->add_option("--test-in", conv_test_in, "optional separate test text file");
  convert->add_option("--holdout", holdout, "test fraction when no --test-in is given");
  convert->add_option("--t-obs", t_obs, "observed steps");
  convert->add_option("--t-pred", t_pred, "predicted steps");
  convert->add_option("--dt", dt, "seconds per step");
  convert->add_option("--seed", seed, "rng seed for the holdout split")->required();
  convert->add_option("--out", conv_out, "output dataset path")->required();
  convert->add_flag("--force", force, "overwrite an existing output file");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run the full training pipeline");
  fs::path config_path;
  std::vector<std::string> ablate;
  pipeline->add_option("--config", config_path, "TOML or JSON run config")->required();
  pipeline->add_option("--ablate", ablate,
                       "ablations: no-pcl, no-hyper, history-only (repeatable)");
  pipeline->add_flag("--force", force, "recompute stages with stale checkpoints");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Recompute reports from checkpoints");
  eval_cmd->add_option("--config", config_path, "TOML or JSON run config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  const auto log = [](const std::string& line) { std::cout << line << "\n"; };
  try {
    if (synth->parsed()) {
      return run_synth(out, n, tail, seed, t_obs, t_pred, dt, noise, force);
    }
    if (convert->parsed()) {
      return run_convert(conv_in, conv_test_in, holdout, t_obs, t_pred, dt, seed, conv_out,
                         force);
    }
    fend::cfg::RunConfig cfg = fend::cfg::load_run_config(config_path);
    if (pipeline->parsed()) {
      for (const std::string& a : ablate) {
        if (a == "no-pcl") {
          cfg.train.use_pcl = false;
        } else if (a == "no-hyper") {
          cfg.train.use_hyper = false;
        } else if (a == "history-only") {
          cfg.train.future_enhanced = false;
          cfg.extractor.future_enhanced = false;
        } else {
          throw fend::ConfigError("unknown ablation `" + a + "`");
        }
      }
      fend::pipe::run_pipeline(cfg, force, log);
      return 0;
    }
    if (eval_cmd->parsed()) {
      fend::pipe::run_eval(cfg, log);
      return 0;
    }
  } catch (const fend::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
