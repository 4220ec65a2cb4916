#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdtlab/model.hpp"
#include "vdtlab/schedule.hpp"

namespace vdtlab {

// Reproducibility envelope written before any result file. Embeds the full
// model config (not just its hash) so a manifest alone rebuilds the run.
struct RunManifest {
  std::string artifact_version;  // filled by make_manifest
  ModelConfig config;
  std::uint64_t config_hash = 0;
  std::uint64_t param_seed = 0;  // mirrors config.param_seed
  std::uint64_t prompt_seed = 0;
  std::uint64_t noise_seed = 0;
  std::vector<double> sigmas;
  std::string intervention_summary = "none";
  bool first_token_ablation = false;
  std::string command;  // optional CLI invocation line
};

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& json_text);

// FNV-1a 64 over the canonical config JSON.
std::uint64_t config_hash(const ModelConfig& config);

RunManifest make_manifest(const ModelConfig& config, std::uint64_t prompt_seed,
                          std::uint64_t noise_seed, const DenoiseSchedule& schedule,
                          const std::string& intervention_summary = "none",
                          bool first_token_ablation = false);

// Deterministic serialization: sorted keys, shortest round-trip numbers.
std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& json_text);

// Re-executes the run a baseline manifest describes (intervention summary
// "none", with or without the first-token ablation). ConfigError otherwise.
DenoiseResult rerun_from_manifest(const RunManifest& manifest);

}  // namespace vdtlab
