#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "fend/config.hpp"
#include "fend/extractor.hpp"
#include "fend/predictor.hpp"

namespace fend::pipe {

using LogFn = std::function<void(const std::string&)>;

// Checkpoint helpers shared by the pipeline stages.
void save_extractor_ckpt(const std::filesystem::path& path,
                         const extractor::ExtractorParams& params,
                         const std::string& config_hash);
extractor::ExtractorParams load_extractor_ckpt(const std::filesystem::path& path);

void save_predictor_ckpt(const std::filesystem::path& path,
                         const pred::PredictorParams& params, const std::string& config_hash,
                         bool use_hyper);
pred::PredictorParams load_predictor_ckpt(const std::filesystem::path& path,
                                          bool* use_hyper = nullptr);

// Runs extractor -> clustering -> baseline ablation -> FEND -> evaluation.
// Every stage writes a hash-stamped artifact under the run directory and is
// skipped when a matching artifact already exists; a hash mismatch aborts
// unless `force` is set. Returns the run directory.
std::filesystem::path run_pipeline(const cfg::RunConfig& cfg, bool force, const LogFn& log);

// Recomputes the evaluation artifacts from existing checkpoints.
void run_eval(const cfg::RunConfig& cfg, const LogFn& log);

}  // namespace fend::pipe
