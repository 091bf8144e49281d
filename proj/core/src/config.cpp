#include "fend/config.hpp"

#include <fstream>
#include <sstream>

#include "fend/errors.hpp"
#include "fend/serialize.hpp"

namespace fend::cfg {

namespace {

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a table/object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(where + ": unknown field `" + key + "`");
    }
  }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void apply_preset(RunConfig& cfg, const std::string& preset) {
  if (preset == "paper") {
    cfg.extractor = {};
    cfg.train = {};
    cfg.train.val_every = 10;
    return;
  }
  if (preset != "desk") {
    throw ConfigError("unknown preset `" + preset + "` (use \"desk\" or \"paper\")");
  }
  cfg.extractor.embed_dim = 32;
  cfg.extractor.dec_input = 16;
  cfg.extractor.epochs = 12;
  cfg.extractor.batch_size = 128;
  cfg.extractor.lr = 1e-3;
  cfg.extractor.pcl_aux_weight = 0.02;
  cfg.train.predictor.enc_hidden = 32;
  cfg.train.predictor.dec_hidden = 32;
  cfg.train.predictor.dec_input = 8;
  cfg.train.predictor.hyper_hidden = 32;
  cfg.train.predictor.hyper_embed = 8;
  cfg.train.predictor.heads = 20;
  cfg.train.predictor.proj_dim = 16;
  cfg.train.batch_size = 256;
  cfg.train.val_every = 10;
  // Epoch counts are rescaled from the dataset size when the pipeline runs.
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"seed", "dataset", "out_dir", "preset", "extractor", "cluster",
                     "train", "predictor", "pcl", "kalman", "cdf_bins"},
                 "config");
  RunConfig cfg;
  if (j.contains("preset")) cfg.preset = j.at("preset").get<std::string>();
  apply_preset(cfg, cfg.preset);
  if (!j.contains("seed")) throw ConfigError("config: `seed` is mandatory");
  cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("dataset")) cfg.dataset = j.at("dataset").get<std::string>();
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  get_if(j, "cdf_bins", cfg.cdf_bins);

  if (j.contains("extractor")) {
    const auto& e = j.at("extractor");
    reject_unknown(e, {"conv_channels", "kernel", "embed_dim", "dec_input", "epochs",
                       "batch_size", "lr", "lr_decay", "pcl_aux_weight", "aux_warmup_epochs", "levels", "tau",
                       "alpha", "future_enhanced"},
                   "config.extractor");
    get_if(e, "conv_channels", cfg.extractor.conv_channels);
    get_if(e, "kernel", cfg.extractor.kernel);
    get_if(e, "embed_dim", cfg.extractor.embed_dim);
    get_if(e, "dec_input", cfg.extractor.dec_input);
    get_if(e, "epochs", cfg.extractor.epochs);
    get_if(e, "batch_size", cfg.extractor.batch_size);
    get_if(e, "lr", cfg.extractor.lr);
    get_if(e, "lr_decay", cfg.extractor.lr_decay);
    get_if(e, "pcl_aux_weight", cfg.extractor.pcl_aux_weight);
    get_if(e, "aux_warmup_epochs", cfg.extractor.aux_warmup_epochs);
    get_if(e, "levels", cfg.extractor.levels);
    get_if(e, "tau", cfg.extractor.tau);
    get_if(e, "alpha", cfg.extractor.alpha);
    get_if(e, "future_enhanced", cfg.extractor.future_enhanced);
  }
  if (j.contains("cluster")) {
    const auto& c = j.at("cluster");
    reject_unknown(c, {"levels", "max_iters", "restarts", "alpha"}, "config.cluster");
    get_if(c, "levels", cfg.cluster.levels);
    get_if(c, "max_iters", cfg.cluster.max_iters);
    get_if(c, "restarts", cfg.cluster.restarts);
    get_if(c, "alpha", cfg.cluster.alpha);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, {"epochs", "warmup_epochs", "batch_size", "lr", "lr_decay",
                       "a_initial", "a_late", "a_switch_epoch", "theta", "use_pcl",
                       "use_hyper", "future_enhanced", "val_every"},
                   "config.train");
    get_if(t, "epochs", cfg.train.epochs);
    get_if(t, "warmup_epochs", cfg.train.warmup_epochs);
    get_if(t, "batch_size", cfg.train.batch_size);
    get_if(t, "lr", cfg.train.lr);
    get_if(t, "lr_decay", cfg.train.lr_decay);
    get_if(t, "a_initial", cfg.train.a_initial);
    get_if(t, "a_late", cfg.train.a_late);
    get_if(t, "a_switch_epoch", cfg.train.a_switch_epoch);
    get_if(t, "theta", cfg.train.theta);
    get_if(t, "use_pcl", cfg.train.use_pcl);
    get_if(t, "use_hyper", cfg.train.use_hyper);
    get_if(t, "future_enhanced", cfg.train.future_enhanced);
    get_if(t, "val_every", cfg.train.val_every);
  }
  if (j.contains("predictor")) {
    const auto& p = j.at("predictor");
    reject_unknown(p, {"enc_hidden", "dec_hidden", "dec_input", "hyper_hidden",
                       "hyper_embed", "heads", "proj_dim"},
                   "config.predictor");
    get_if(p, "enc_hidden", cfg.train.predictor.enc_hidden);
    get_if(p, "dec_hidden", cfg.train.predictor.dec_hidden);
    get_if(p, "dec_input", cfg.train.predictor.dec_input);
    get_if(p, "hyper_hidden", cfg.train.predictor.hyper_hidden);
    get_if(p, "hyper_embed", cfg.train.predictor.hyper_embed);
    get_if(p, "heads", cfg.train.predictor.heads);
    get_if(p, "proj_dim", cfg.train.predictor.proj_dim);
  }
  if (j.contains("pcl")) {
    const auto& p = j.at("pcl");
    reject_unknown(p, {"tau", "momentum_beta", "refresh_every", "alpha"}, "config.pcl");
    get_if(p, "tau", cfg.train.pcl.tau);
    get_if(p, "momentum_beta", cfg.train.pcl.momentum_beta);
    get_if(p, "refresh_every", cfg.train.pcl.refresh_every);
    get_if(p, "alpha", cfg.train.pcl.alpha);
  }
  if (j.contains("kalman")) {
    const auto& k = j.at("kalman");
    reject_unknown(k, {"process_noise_sigma", "obs_noise_sigma"}, "config.kalman");
    get_if(k, "process_noise_sigma", cfg.kalman.process_noise_sigma);
    get_if(k, "obs_noise_sigma", cfg.kalman.obs_noise_sigma);
  }

  if (cfg.train.pcl.tau <= 0.0) throw ConfigError("config.pcl: tau must be positive");
  if (cfg.train.pcl.momentum_beta < 0.0 || cfg.train.pcl.momentum_beta >= 1.0) {
    throw ConfigError("config.pcl: momentum_beta must be in [0,1)");
  }
  return cfg;
}

nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["dataset"] = cfg.dataset.string();
  j["out_dir"] = cfg.out_dir.string();
  j["preset"] = cfg.preset;
  j["extractor"] = {{"conv_channels", cfg.extractor.conv_channels},
                    {"kernel", cfg.extractor.kernel},
                    {"embed_dim", cfg.extractor.embed_dim},
                    {"dec_input", cfg.extractor.dec_input},
                    {"epochs", cfg.extractor.epochs},
                    {"batch_size", cfg.extractor.batch_size},
                    {"lr", cfg.extractor.lr},
                    {"lr_decay", cfg.extractor.lr_decay},
                    {"pcl_aux_weight", cfg.extractor.pcl_aux_weight},
                    {"aux_warmup_epochs", cfg.extractor.aux_warmup_epochs},
                    {"levels", cfg.extractor.levels},
                    {"tau", cfg.extractor.tau},
                    {"alpha", cfg.extractor.alpha},
                    {"future_enhanced", cfg.extractor.future_enhanced}};
  j["cluster"] = {{"levels", cfg.cluster.levels},
                  {"max_iters", cfg.cluster.max_iters},
                  {"restarts", cfg.cluster.restarts},
                  {"alpha", cfg.cluster.alpha}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"warmup_epochs", cfg.train.warmup_epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"lr_decay", cfg.train.lr_decay},
                {"a_initial", cfg.train.a_initial},
                {"a_late", cfg.train.a_late},
                {"a_switch_epoch", cfg.train.a_switch_epoch},
                {"theta", cfg.train.theta},
                {"use_pcl", cfg.train.use_pcl},
                {"use_hyper", cfg.train.use_hyper},
                {"future_enhanced", cfg.train.future_enhanced},
                {"val_every", cfg.train.val_every}};
  j["predictor"] = {{"enc_hidden", cfg.train.predictor.enc_hidden},
                    {"dec_hidden", cfg.train.predictor.dec_hidden},
                    {"dec_input", cfg.train.predictor.dec_input},
                    {"hyper_hidden", cfg.train.predictor.hyper_hidden},
                    {"hyper_embed", cfg.train.predictor.hyper_embed},
                    {"heads", cfg.train.predictor.heads},
                    {"proj_dim", cfg.train.predictor.proj_dim}};
  j["pcl"] = {{"tau", cfg.train.pcl.tau},
              {"momentum_beta", cfg.train.pcl.momentum_beta},
              {"refresh_every", cfg.train.pcl.refresh_every},
              {"alpha", cfg.train.pcl.alpha}};
  j["kalman"] = {{"process_noise_sigma", cfg.kalman.process_noise_sigma},
                 {"obs_noise_sigma", cfg.kalman.obs_noise_sigma}};
  j["cdf_bins"] = cfg.cdf_bins;
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  return io::fnv1a_hex(run_config_to_json(cfg).dump());
}

namespace {

std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

nlohmann::json parse_toml_value(const std::string& raw, std::size_t lineno) {
  const std::string v = strip(raw);
  if (v.empty()) throw ConfigError("toml:" + std::to_string(lineno) + ": missing value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') {
      throw ConfigError("toml:" + std::to_string(lineno) + ": unterminated string");
    }
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '[') {
    if (v.back() != ']') {
      throw ConfigError("toml:" + std::to_string(lineno) + ": unterminated array");
    }
    nlohmann::json arr = nlohmann::json::array();
    std::string inner = v.substr(1, v.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (strip(item).empty()) continue;
      arr.push_back(parse_toml_value(item, lineno));
    }
    return arr;
  }
  try {
    if (v.find_first_of(".eE") == std::string::npos) {
      std::size_t used = 0;
      const long long i = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return i;
    }
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("toml:" + std::to_string(lineno) + ": cannot parse value `" + v + "`");
  }
}

}  // namespace

nlohmann::json parse_toml_subset(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* section = &root;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments (quotes in this subset never contain '#').
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("toml:" + std::to_string(lineno) + ": bad section header");
      }
      const std::string path = strip(line.substr(1, line.size() - 2));
      if (path.empty()) throw ConfigError("toml:" + std::to_string(lineno) + ": empty section");
      section = &root;
      std::stringstream ss(path);
      std::string part;
      while (std::getline(ss, part, '.')) {
        section = &((*section)[strip(part)]);
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("toml:" + std::to_string(lineno) + ": expected `key = value`");
    }
    const std::string key = strip(line.substr(0, eq));
    if (key.empty()) throw ConfigError("toml:" + std::to_string(lineno) + ": empty key");
    (*section)[key] = parse_toml_value(line.substr(eq + 1), lineno);
  }
  return root;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  if (path.extension() == ".toml") {
    j = parse_toml_subset(buf.str());
  } else {
    try {
      j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return run_config_from_json(j);
}

}  // namespace fend::cfg
