#include "fend/trajdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fend/errors.hpp"
#include "json.hpp"

namespace fend::traj {

namespace {

constexpr double kPi = 3.14159265358979323846;

Point rotate(const Point& p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p[0] - s * p[1], s * p[0] + c * p[1]};
}

}  // namespace

TrajectorySample normalize_window(const std::vector<Point>& raw_obs,
                                  const std::vector<Point>& raw_fut,
                                  std::int64_t sample_id, int pattern_label) {
  if (raw_obs.size() < 2) {
    throw ContractError("normalize_window: need at least 2 observed points");
  }
  TrajectorySample s;
  s.sample_id = sample_id;
  s.pattern_label = pattern_label;
  const Point& last = raw_obs.back();
  const Point& prev = raw_obs[raw_obs.size() - 2];
  const double vx = last[0] - prev[0], vy = last[1] - prev[1];
  double rot = 0.0;
  if (std::sqrt(vx * vx + vy * vy) >= 1e-12) {
    rot = std::atan2(vy, vx);
  }
  s.transform = {last[0], last[1], rot};
  const auto apply = [&](const Point& p) {
    return rotate({p[0] - last[0], p[1] - last[1]}, -rot);
  };
  s.obs.reserve(raw_obs.size());
  for (const Point& p : raw_obs) s.obs.push_back(apply(p));
  s.fut.reserve(raw_fut.size());
  for (const Point& p : raw_fut) s.fut.push_back(apply(p));
  return s;
}

std::vector<Point> denormalize(const TrajectorySample& sample,
                               const std::vector<Point>& pred) {
  std::vector<Point> out;
  out.reserve(pred.size());
  for (const Point& p : pred) {
    Point r = rotate(p, sample.transform.rot);
    out.push_back({r[0] + sample.transform.tx, r[1] + sample.transform.ty});
  }
  return out;
}

std::vector<Point> raw_obs(const TrajectorySample& sample) {
  return denormalize(sample, sample.obs);
}

std::vector<Point> raw_fut(const TrajectorySample& sample) {
  return denormalize(sample, sample.fut);
}

DatasetSplit load_ethucy_text(const std::filesystem::path& path, std::size_t t_obs,
                              std::size_t t_pred, double dt) {
  if (t_obs < 2 || t_pred < 2) {
    throw ConfigError("load_ethucy_text: t_obs and t_pred must be >= 2");
  }
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());

  struct Row {
    std::int64_t frame;
    double x, y;
    std::size_t line;
  };
  std::map<std::int64_t, std::vector<Row>> by_agent;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;  // blank line
    ls.clear();
    ls.str(line);
    double frame, agent, x, y;
    if (!(ls >> frame >> agent >> x >> y)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected `frame_id agent_id x y`");
    }
    std::string extra;
    if (ls >> extra) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": trailing fields after `frame_id agent_id x y`");
    }
    by_agent[static_cast<std::int64_t>(std::llround(agent))].push_back(
        {static_cast<std::int64_t>(std::llround(frame)), x, y, lineno});
  }

  // Build constant-stride tracks, then window them.
  std::vector<RawTrack> tracks;
  for (auto& [agent, rows] : by_agent) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].frame == rows[i - 1].frame) {
        throw FormatError(path.string() + ":" + std::to_string(rows[i].line) +
                          ": duplicate frame " + std::to_string(rows[i].frame) +
                          " for agent " + std::to_string(agent));
      }
    }
    std::size_t start = 0;
    while (start < rows.size()) {
      std::size_t end = start + 1;
      const std::int64_t stride =
          end < rows.size() ? rows[end].frame - rows[start].frame : 1;
      while (end < rows.size() && rows[end].frame - rows[end - 1].frame == stride) ++end;
      RawTrack tr;
      tr.agent_id = agent;
      for (std::size_t i = start; i < end; ++i) {
        tr.frames.push_back(rows[i].frame);
        tr.points.push_back({rows[i].x, rows[i].y});
      }
      tracks.push_back(std::move(tr));
      start = end;
    }
  }

  DatasetSplit split;
  split.t_obs = t_obs;
  split.t_pred = t_pred;
  split.dt = dt;
  const std::size_t window = t_obs + t_pred;
  std::int64_t next_id = 0;
  for (const RawTrack& tr : tracks) {
    if (tr.points.size() < window) continue;
    for (std::size_t s = 0; s + window <= tr.points.size(); ++s) {
      std::vector<Point> obs(tr.points.begin() + s, tr.points.begin() + s + t_obs);
      std::vector<Point> fut(tr.points.begin() + s + t_obs,
                             tr.points.begin() + s + window);
      split.train.push_back(normalize_window(obs, fut, next_id++));
    }
  }
  if (split.train.empty()) {
    throw FormatError(path.string() + ": no windows of length " +
                      std::to_string(window) + " in any track");
  }
  return split;
}

void split_holdout(DatasetSplit& split, double test_fraction, std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw ConfigError("split_holdout: test_fraction must be in (0,1)");
  }
  Rng rng(seed);
  std::vector<std::size_t> idx(split.train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  const std::size_t n_test =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
  std::vector<bool> is_test(idx.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[idx[i]] = true;
  std::vector<TrajectorySample> train, test;
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    (is_test[i] ? test : train).push_back(std::move(split.train[i]));
  }
  split.train = std::move(train);
  split.test = std::move(test);
}

namespace {

struct SynthSample {
  std::vector<Point> points;  // t_obs + t_pred raw positions
  int pattern;
};

SynthSample gen_sample(int pattern, const SynthConfig& cfg, Rng& rng) {
  const std::size_t total = cfg.t_obs + cfg.t_pred;
  const std::size_t last_obs = cfg.t_obs - 1;
  const Point start = {rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0)};
  const double heading = rng.uniform(0.0, 2.0 * kPi);
  const double speed = rng.uniform(0.5, 2.0);

  // Per-step speed/heading; maneuver parameters drawn up front so the rng
  // stream is consumed in a fixed order per pattern.
  double turn_rate = 0.0;
  double accel = 0.0;
  std::size_t onset = last_obs;
  double stop_time = 0.0;
  std::size_t stop_frames = 0;
  double back_speed = 0.0;
  switch (pattern) {
    case 1:  // turn, starting at the last observed frame
      turn_rate = (rng.uniform01() < 0.5 ? -1.0 : 1.0) *
                  rng.uniform(20.0, 60.0) * kPi / 180.0;
      onset = last_obs;
      break;
    case 2:  // accelerate, onset in the late observation window
      accel = rng.uniform(0.5, 1.5);
      onset = last_obs - rng.below(3);
      break;
    case 3:  // brake to a stop within the future horizon
      stop_time = rng.uniform(0.3, 0.8) * static_cast<double>(cfg.t_pred) * cfg.dt;
      onset = last_obs - rng.below(3);
      break;
    case 4:  // stop, then move back along the incoming direction
      stop_frames = 2 + rng.below(4);
      back_speed = rng.uniform(0.5, 1.0) * speed;
      onset = last_obs - rng.below(2);
      break;
    default:
      break;
  }

  SynthSample out;
  out.pattern = pattern;
  out.points.resize(total);
  Point pos = start;
  double psi = heading;
  for (std::size_t k = 0; k < total; ++k) {
    out.points[k] = pos;
    // advance to k+1
    double v = speed;
    double dir = psi;
    if (pattern == 1 && k >= onset) {
      psi += turn_rate * cfg.dt;
      dir = psi;
    } else if (pattern == 2 && k >= onset) {
      v = speed + accel * cfg.dt * static_cast<double>(k - onset);
    } else if (pattern == 3 && k >= onset) {
      const double el = cfg.dt * static_cast<double>(k - onset);
      v = std::max(0.0, speed * (1.0 - el / stop_time));
    } else if (pattern == 4 && k >= onset) {
      if (k - onset < stop_frames) {
        v = 0.0;
      } else {
        v = back_speed;
        dir = psi + kPi;
      }
    }
    pos[0] += v * std::cos(dir) * cfg.dt;
    pos[1] += v * std::sin(dir) * cfg.dt;
  }
  if (cfg.noise_sigma > 0.0) {
    for (Point& p : out.points) {
      p[0] += rng.normal(0.0, cfg.noise_sigma);
      p[1] += rng.normal(0.0, cfg.noise_sigma);
    }
  }
  return out;
}

}  // namespace

DatasetSplit synth_longtail(const SynthConfig& cfg) {
  if (cfg.tail_fraction <= 0.0 || cfg.tail_fraction >= 1.0) {
    throw ConfigError("synth_longtail: tail_fraction must be in (0,1)");
  }
  if (cfg.n < 100) throw ConfigError("synth_longtail: n must be >= 100");
  if (cfg.t_obs < 2 || cfg.t_pred < 1) {
    throw ConfigError("synth_longtail: t_obs >= 2 and t_pred >= 1 required");
  }

  const std::size_t n_tail =
      static_cast<std::size_t>(std::llround(cfg.tail_fraction * static_cast<double>(cfg.n)));
  std::size_t counts[5];
  counts[0] = cfg.n - n_tail;
  for (int p = 1; p <= 4; ++p) {
    counts[p] = n_tail / 4 + (static_cast<std::size_t>(p) <= n_tail % 4 ? 1 : 0);
  }

  Rng rng(cfg.seed);
  DatasetSplit split;
  split.t_obs = cfg.t_obs;
  split.t_pred = cfg.t_pred;
  split.dt = cfg.dt;

  std::vector<TrajectorySample> by_pattern[5];
  std::int64_t next_id = 0;
  for (int p = 0; p <= 4; ++p) {
    for (std::size_t i = 0; i < counts[p]; ++i) {
      SynthSample s = gen_sample(p, cfg, rng);
      std::vector<Point> obs(s.points.begin(), s.points.begin() + cfg.t_obs);
      std::vector<Point> fut(s.points.begin() + cfg.t_obs, s.points.end());
      by_pattern[p].push_back(normalize_window(obs, fut, next_id++, p));
    }
  }

  // Stratified 80/20 split per pattern.
  for (int p = 0; p <= 4; ++p) {
    auto& samples = by_pattern[p];
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(samples.size())));
    std::vector<bool> in_train(samples.size(), false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      (in_train[i] ? split.train : split.test).push_back(std::move(samples[i]));
    }
  }
  std::sort(split.train.begin(), split.train.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  std::sort(split.test.begin(), split.test.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  return split;
}

namespace {

nlohmann::ordered_json sample_to_json(const TrajectorySample& s, const char* split_name) {
  nlohmann::ordered_json j;
  j["id"] = s.sample_id;
  j["split"] = split_name;
  j["pattern"] = s.pattern_label;
  j["transform"] = {s.transform.tx, s.transform.ty, s.transform.rot};
  nlohmann::ordered_json obs = nlohmann::ordered_json::array();
  for (const Point& p : s.obs) obs.push_back({p[0], p[1]});
  nlohmann::ordered_json fut = nlohmann::ordered_json::array();
  for (const Point& p : s.fut) fut.push_back({p[0], p[1]});
  j["obs"] = std::move(obs);
  j["fut"] = std::move(fut);
  return j;
}

TrajectorySample sample_from_json(const nlohmann::json& j) {
  TrajectorySample s;
  s.sample_id = j.at("id").get<std::int64_t>();
  s.pattern_label = j.at("pattern").get<int>();
  const auto& tr = j.at("transform");
  s.transform = {tr.at(0).get<double>(), tr.at(1).get<double>(), tr.at(2).get<double>()};
  for (const auto& p : j.at("obs")) s.obs.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const auto& p : j.at("fut")) s.fut.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return s;
}

}  // namespace

void save_dataset_json(const DatasetSplit& split, const std::filesystem::path& path,
                       const std::string& source) {
  nlohmann::ordered_json j;
  j["meta"] = {{"format", "fend-dataset"},
               {"version", 1},
               {"t_obs", split.t_obs},
               {"t_pred", split.t_pred},
               {"dt", split.dt},
               {"source", source}};
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (const auto& s : split.train) samples.push_back(sample_to_json(s, "train"));
  for (const auto& s : split.test) samples.push_back(sample_to_json(s, "test"));
  j["samples"] = std::move(samples);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

DatasetSplit load_dataset_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.contains("meta") || j["meta"].value("format", "") != "fend-dataset") {
    throw FormatError(path.string() + ": not a fend-dataset file");
  }
  DatasetSplit split;
  split.t_obs = j["meta"].at("t_obs").get<std::size_t>();
  split.t_pred = j["meta"].at("t_pred").get<std::size_t>();
  split.dt = j["meta"].at("dt").get<double>();
  for (const auto& js : j.at("samples")) {
    TrajectorySample s = sample_from_json(js);
    if (s.obs.size() != split.t_obs || s.fut.size() != split.t_pred) {
      throw FormatError(path.string() + ": sample " + std::to_string(s.sample_id) +
                        " has wrong horizon lengths");
    }
    (js.at("split") == "train" ? split.train : split.test).push_back(std::move(s));
  }
  if (split.train.empty() && split.test.empty()) {
    throw FormatError(path.string() + ": empty dataset");
  }
  return split;
}

}  // namespace fend::traj
