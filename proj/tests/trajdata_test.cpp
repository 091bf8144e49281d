#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fend/errors.hpp"
#include "fend/trajdata.hpp"

using namespace fend::traj;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

double dist(const Point& a, const Point& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("normalize puts the last observed point at the origin, velocity on +x") {
  // Moving along +y, ending at (3,4): the previous point must land on -x.
  std::vector<Point> obs = {{3, 2}, {3, 3}, {3, 4}};
  std::vector<Point> fut = {{3, 5}, {3, 6}};
  const auto s = normalize_window(obs, fut, 0);
  CHECK(s.obs.back()[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.obs.back()[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.obs[1][0] == doctest::Approx(-1.0));
  CHECK(std::abs(s.obs[1][1]) < 1e-9);
  // Future continues along +x after rotation.
  CHECK(s.fut[0][0] == doctest::Approx(1.0));
  CHECK(std::abs(s.fut[0][1]) < 1e-9);
}

TEST_CASE("stationary trajectory normalizes with rotation 0") {
  std::vector<Point> obs = {{2, 7}, {2, 7}, {2, 7}};
  std::vector<Point> fut = {{2, 7}};
  const auto s = normalize_window(obs, fut, 0);
  CHECK(s.transform.rot == 0.0);
  CHECK(s.transform.tx == doctest::Approx(2.0));
  CHECK(s.transform.ty == doctest::Approx(7.0));
  for (const auto& p : s.obs) {
    CHECK(p[0] == doctest::Approx(0.0));
    CHECK(p[1] == doctest::Approx(0.0));
  }
}

TEST_CASE("normalization preserves pairwise distances") {
  fend::Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Point> obs, fut;
    for (int i = 0; i < 8; ++i) obs.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5)});
    for (int i = 0; i < 12; ++i) fut.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5)});
    const auto s = normalize_window(obs, fut, 0);
    std::vector<Point> raw = obs;
    raw.insert(raw.end(), fut.begin(), fut.end());
    std::vector<Point> norm = s.obs;
    norm.insert(norm.end(), s.fut.begin(), s.fut.end());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      for (std::size_t j = i + 1; j < raw.size(); ++j) {
        CHECK(std::abs(dist(raw[i], raw[j]) - dist(norm[i], norm[j])) < 1e-12);
      }
    }
  }
}

TEST_CASE("denormalize(normalize(x)) round-trips within 1e-9") {
  fend::Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Point> obs, fut;
    for (int i = 0; i < 8; ++i) obs.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50)});
    for (int i = 0; i < 12; ++i) fut.push_back({rng.uniform(-50, 50), rng.uniform(-50, 50)});
    const auto s = normalize_window(obs, fut, 0);
    const auto obs_rt = raw_obs(s);
    const auto fut_rt = raw_fut(s);
    for (std::size_t i = 0; i < obs.size(); ++i) CHECK(dist(obs[i], obs_rt[i]) < 1e-9);
    for (std::size_t i = 0; i < fut.size(); ++i) CHECK(dist(fut[i], fut_rt[i]) < 1e-9);
  }
}

TEST_CASE("zero prediction denormalizes to the last observed raw point when rotation is 0") {
  std::vector<Point> obs = {{2, 7}, {2, 7}};
  std::vector<Point> fut = {{2, 7}};
  const auto s = normalize_window(obs, fut, 0);
  const auto back = denormalize(s, {{0, 0}, {0, 0}});
  for (const auto& p : back) {
    CHECK(p[0] == doctest::Approx(2.0));
    CHECK(p[1] == doctest::Approx(7.0));
  }
}

TEST_CASE("text loader windows tracks with stride 1") {
  std::ostringstream rows;
  for (int f = 0; f < 20; ++f) rows << f * 10 << " 1 " << 0.1 * f << " 2.0\n";
  const auto p20 = temp_file("fend_t20.txt", rows.str());
  const auto split20 = load_ethucy_text(p20, 8, 12);
  CHECK(split20.train.size() == 1);

  rows << 200 << " 1 " << 2.0 << " 2.0\n";  // 21st frame
  const auto p21 = temp_file("fend_t21.txt", rows.str());
  const auto split21 = load_ethucy_text(p21, 8, 12);
  CHECK(split21.train.size() == 2);
}

TEST_CASE("windowing count matches max(0, len - window + 1) per track") {
  std::ostringstream rows;
  const int len_a = 25, len_b = 19;  // 19 < window -> skipped
  for (int f = 0; f < len_a; ++f) rows << f << " 1 " << f << " 0\n";
  for (int f = 0; f < len_b; ++f) rows << f << " 2 " << f << " 1\n";
  const auto p = temp_file("fend_twin.txt", rows.str());
  const auto split = load_ethucy_text(p, 8, 12);
  CHECK(split.train.size() == static_cast<std::size_t>(len_a - 20 + 1));
}

TEST_CASE("malformed row reports its line number") {
  const auto p = temp_file("fend_bad.txt", "0 1 0.0 0.0\na b c\n");
  try {
    load_ethucy_text(p, 2, 2);
    FAIL("expected FormatError");
  } catch (const fend::FormatError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("file with no usable windows raises an empty-dataset error") {
  const auto p = temp_file("fend_short.txt", "0 1 0 0\n1 1 1 0\n");
  CHECK_THROWS_AS(load_ethucy_text(p, 8, 12), fend::FormatError);
}

TEST_CASE("a stride change splits the track instead of corrupting windows") {
  std::ostringstream rows;
  for (int f = 0; f < 20; ++f) rows << f << " 1 " << f << " 0\n";
  // Same agent reappears at stride 2: separate 20-frame segment.
  for (int f = 100; f < 140; f += 2) rows << f << " 1 " << f << " 5\n";
  const auto p = temp_file("fend_stride.txt", rows.str());
  const auto split = load_ethucy_text(p, 8, 12);
  CHECK(split.train.size() == 2);
}

TEST_CASE("synthetic long-tail counts, stratification and determinism") {
  SynthConfig cfg;
  cfg.n = 1000;
  cfg.tail_fraction = 0.1;
  cfg.seed = 7;
  const auto a = synth_longtail(cfg);
  std::size_t head = 0, per_pattern[5] = {0, 0, 0, 0, 0};
  std::size_t train_per_pattern[5] = {0, 0, 0, 0, 0};
  const auto count = [&](const std::vector<TrajectorySample>& v, bool is_train) {
    for (const auto& s : v) {
      ++per_pattern[s.pattern_label];
      if (s.pattern_label == 0) ++head;
      if (is_train) ++train_per_pattern[s.pattern_label];
    }
  };
  count(a.train, true);
  count(a.test, false);
  CHECK(head == 900);
  for (int p = 1; p <= 4; ++p) CHECK(per_pattern[p] == 25);
  // Stratified 80/20 within +-1 sample.
  for (int p = 0; p <= 4; ++p) {
    const double want = 0.8 * static_cast<double>(per_pattern[p]);
    CHECK(std::abs(static_cast<double>(train_per_pattern[p]) - want) <= 1.0);
  }

  // Same seed -> byte-identical dataset files.
  const auto f1 = std::filesystem::temp_directory_path() / "fend_ds_a.json";
  const auto f2 = std::filesystem::temp_directory_path() / "fend_ds_b.json";
  save_dataset_json(a, f1, "synthetic");
  save_dataset_json(synth_longtail(cfg), f2, "synthetic");
  CHECK(file_bytes(f1) == file_bytes(f2));
}

TEST_CASE("noiseless head samples are collinear and equally spaced") {
  SynthConfig cfg;
  cfg.n = 100;
  cfg.tail_fraction = 0.05;
  cfg.seed = 3;
  cfg.noise_sigma = 0.0;
  const auto split = synth_longtail(cfg);
  for (const auto& s : split.train) {
    if (s.pattern_label != 0) continue;
    std::vector<Point> track = s.obs;
    track.insert(track.end(), s.fut.begin(), s.fut.end());
    const double step0 = dist(track[0], track[1]);
    for (std::size_t i = 1; i + 1 < track.size(); ++i) {
      const double sx = track[i + 1][0] - track[i][0];
      const double sy = track[i + 1][1] - track[i][1];
      const double px = track[i][0] - track[i - 1][0];
      const double py = track[i][1] - track[i - 1][1];
      CHECK(std::abs(sx * py - sy * px) < 1e-9);                  // collinear
      CHECK(std::abs(dist(track[i], track[i + 1]) - step0) < 1e-9);  // equal spacing
    }
  }
}

TEST_CASE("tail_fraction outside (0,1) is a config error") {
  SynthConfig cfg;
  cfg.tail_fraction = 1.5;
  CHECK_THROWS_AS(synth_longtail(cfg), fend::ConfigError);
  cfg.tail_fraction = 0.0;
  CHECK_THROWS_AS(synth_longtail(cfg), fend::ConfigError);
}

TEST_CASE("dataset json round-trips") {
  SynthConfig cfg;
  cfg.n = 120;
  cfg.seed = 5;
  const auto a = synth_longtail(cfg);
  const auto path = std::filesystem::temp_directory_path() / "fend_rt.json";
  save_dataset_json(a, path, "synthetic");
  const auto b = load_dataset_json(path);
  REQUIRE(b.train.size() == a.train.size());
  REQUIRE(b.test.size() == a.test.size());
  CHECK(b.t_obs == a.t_obs);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(b.train[i].sample_id == a.train[i].sample_id);
    CHECK(b.train[i].pattern_label == a.train[i].pattern_label);
    for (std::size_t s = 0; s < a.t_obs; ++s) {
      CHECK(dist(b.train[i].obs[s], a.train[i].obs[s]) < 1e-15);
    }
  }
}
