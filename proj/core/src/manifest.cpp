#include "vdtlab/manifest.hpp"

#include <json.hpp>

#include "vdtlab/errors.hpp"
#include "vdtlab/rng.hpp"
#include "vdtlab/version.hpp"

namespace vdtlab {

namespace {

using json = nlohmann::json;

json config_json(const ModelConfig& c) {
  json j;
  j["arch"] = c.arch == Arch::kJoint ? "joint" : "additive";
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["head_dim"] = c.head_dim;
  j["frames"] = c.frames;
  j["height"] = c.height;
  j["width"] = c.width;
  j["text_tokens"] = c.text_tokens;
  j["text_position"] = c.text_position == TextPosition::kPrefix ? "prefix" : "suffix";
  j["latent_dim"] = c.latent_dim;
  j["mlp_hidden"] = c.mlp_hidden;
  j["default_steps"] = c.default_steps;
  j["param_seed"] = c.param_seed;
  return j;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("config is missing field ") + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field ") + key + " has the wrong type");
  }
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  const std::string arch = field<std::string>(j, "arch");
  if (arch == "joint")
    c.arch = Arch::kJoint;
  else if (arch == "additive")
    c.arch = Arch::kAdditive;
  else
    throw ConfigError("config arch must be joint or additive");
  c.layers = field<int>(j, "layers");
  c.heads = field<int>(j, "heads");
  c.head_dim = field<int>(j, "head_dim");
  c.frames = field<int>(j, "frames");
  c.height = field<int>(j, "height");
  c.width = field<int>(j, "width");
  c.text_tokens = field<int>(j, "text_tokens");
  const std::string tp = field<std::string>(j, "text_position");
  if (tp == "prefix")
    c.text_position = TextPosition::kPrefix;
  else if (tp == "suffix")
    c.text_position = TextPosition::kSuffix;
  else
    throw ConfigError("config text_position must be prefix or suffix");
  c.latent_dim = field<int>(j, "latent_dim");
  c.mlp_hidden = field<int>(j, "mlp_hidden");
  c.default_steps = field<int>(j, "default_steps");
  c.param_seed = field<std::uint64_t>(j, "param_seed");
  c.validate();
  return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& config) { return config_json(config).dump(2); }

ModelConfig config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config JSON parse failure: ") + e.what());
  }
  return config_from(j);
}

std::uint64_t config_hash(const ModelConfig& config) {
  const std::string s = config_json(config).dump();
  return fnv1a64(s.data(), s.size());
}

RunManifest make_manifest(const ModelConfig& config, std::uint64_t prompt_seed,
                          std::uint64_t noise_seed, const DenoiseSchedule& schedule,
                          const std::string& intervention_summary,
                          bool first_token_ablation) {
  schedule.validate();
  RunManifest m;
  m.artifact_version = kVersionString;
  m.config = config;
  m.config_hash = config_hash(config);
  m.param_seed = config.param_seed;
  m.prompt_seed = prompt_seed;
  m.noise_seed = noise_seed;
  m.sigmas = schedule.sigmas;
  m.intervention_summary = intervention_summary;
  m.first_token_ablation = first_token_ablation;
  return m;
}

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["artifact_version"] = m.artifact_version;
  j["config"] = config_json(m.config);
  j["config_hash"] = m.config_hash;
  j["param_seed"] = m.param_seed;
  j["prompt_seed"] = m.prompt_seed;
  j["noise_seed"] = m.noise_seed;
  j["sigmas"] = m.sigmas;
  j["intervention"] = m.intervention_summary;
  j["first_token_ablation"] = m.first_token_ablation;
  j["command"] = m.command;
  return j.dump(2);
}

RunManifest manifest_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("manifest JSON parse failure: ") + e.what());
  }
  RunManifest m;
  m.artifact_version = field<std::string>(j, "artifact_version");
  if (!j.contains("config")) throw ConfigError("manifest is missing its config");
  m.config = config_from(j.at("config"));
  m.config_hash = field<std::uint64_t>(j, "config_hash");
  if (m.config_hash != config_hash(m.config))
    throw ConfigError("manifest config hash does not match its config");
  m.param_seed = field<std::uint64_t>(j, "param_seed");
  if (m.param_seed != m.config.param_seed)
    throw ConfigError("manifest param_seed does not match its config");
  m.prompt_seed = field<std::uint64_t>(j, "prompt_seed");
  m.noise_seed = field<std::uint64_t>(j, "noise_seed");
  m.sigmas = field<std::vector<double>>(j, "sigmas");
  m.intervention_summary = field<std::string>(j, "intervention");
  m.first_token_ablation = field<bool>(j, "first_token_ablation");
  m.command = field<std::string>(j, "command");
  return m;
}

DenoiseResult rerun_from_manifest(const RunManifest& m) {
  if (m.intervention_summary != "none")
    throw ConfigError("manifest describes interventions; only baseline runs can be re-executed");
  const Model model = Model::build(m.config);
  MatD text = make_prompt_embedding(m.prompt_seed, m.config);
  if (m.first_token_ablation) text = first_token_only(text);
  const MatD noise = make_noise(m.noise_seed, m.config);
  DenoiseSchedule schedule;
  schedule.sigmas = m.sigmas;
  return denoise(model, noise, text, schedule);
}

}  // namespace vdtlab
