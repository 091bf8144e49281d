#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fend/cluster.hpp"
#include "fend/tensor.hpp"

#include "json.hpp"

namespace fend::io {

std::string fnv1a_hex(const std::string& data);

// Versioned JSON checkpoint of named tensors plus a config blob and the
// config hash that produced it.
void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const std::string& config_hash, const nlohmann::ordered_json& config,
                     const std::vector<std::pair<std::string, const num::Tensor*>>& tensors);

struct Checkpoint {
  std::string kind;
  std::string config_hash;
  nlohmann::json config;
  std::map<std::string, num::Tensor> tensors;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_embeddings_csv(const std::filesystem::path& path,
                         const std::vector<std::int64_t>& sample_ids,
                         const cluster::FeatureMatrix& features);

// Two-column CSV `sample_id,<value_name>`.
void save_scores_csv(const std::filesystem::path& path, const std::string& value_name,
                     const std::vector<std::int64_t>& sample_ids,
                     const std::vector<double>& values);

}  // namespace fend::io
