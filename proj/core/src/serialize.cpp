#include "fend/serialize.hpp"

#include <cstdio>
#include <fstream>

#include "fend/errors.hpp"

namespace fend::io {

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const std::string& config_hash, const nlohmann::ordered_json& config,
                     const std::vector<std::pair<std::string, const num::Tensor*>>& tensors) {
  nlohmann::ordered_json j;
  j["format"] = "fend-checkpoint";
  j["version"] = 1;
  j["kind"] = kind;
  j["config_hash"] = config_hash;
  j["config"] = config;
  nlohmann::ordered_json ts;
  for (const auto& [name, tensor] : tensors) {
    nlohmann::ordered_json tj;
    tj["shape"] = tensor->shape();
    tj["data"] = tensor->vec();
    ts[name] = std::move(tj);
  }
  j["tensors"] = std::move(ts);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "fend-checkpoint" || j.value("version", 0) != 1) {
    throw FormatError(path.string() + ": not a fend-checkpoint v1 file");
  }
  Checkpoint c;
  c.kind = j.at("kind").get<std::string>();
  c.config_hash = j.at("config_hash").get<std::string>();
  c.config = j.at("config");
  for (const auto& [name, tj] : j.at("tensors").items()) {
    c.tensors.emplace(name, num::Tensor(tj.at("shape").get<std::vector<std::size_t>>(),
                                        tj.at("data").get<std::vector<double>>()));
  }
  return c;
}

void save_embeddings_csv(const std::filesystem::path& path,
                         const std::vector<std::int64_t>& sample_ids,
                         const cluster::FeatureMatrix& features) {
  if (sample_ids.size() != features.rows) {
    throw ContractError("save_embeddings_csv: id count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "sample_id";
  for (std::size_t e = 0; e < features.cols; ++e) out << ",f" << e;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < features.rows; ++i) {
    out << sample_ids[i];
    for (std::size_t e = 0; e < features.cols; ++e) {
      std::snprintf(buf, sizeof(buf), ",%.9g", features.row(i)[e]);
      out << buf;
    }
    out << "\n";
  }
}

void save_scores_csv(const std::filesystem::path& path, const std::string& value_name,
                     const std::vector<std::int64_t>& sample_ids,
                     const std::vector<double>& values) {
  if (sample_ids.size() != values.size()) {
    throw ContractError("save_scores_csv: id count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "sample_id," << value_name << "\n";
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g", values[i]);
    out << sample_ids[i] << "," << buf << "\n";
  }
}

}  // namespace fend::io
