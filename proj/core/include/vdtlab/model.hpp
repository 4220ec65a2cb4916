#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "vdtlab/attention.hpp"
#include "vdtlab/mat.hpp"
#include "vdtlab/schedule.hpp"
#include "vdtlab/token_layout.hpp"

namespace vdtlab {

// kJoint: text and vision tokens attend together in one sequence.
// kAdditive: vision-only self-attention; the mean text embedding enters
// through a learned projection added to every token.
enum class Arch { kJoint, kAdditive };

struct ModelConfig {
  Arch arch = Arch::kJoint;
  int layers = 8;
  int heads = 4;
  int head_dim = 16;
  int frames = 4;
  int height = 8;
  int width = 8;
  int text_tokens = 4;
  TextPosition text_position = TextPosition::kPrefix;
  int latent_dim = 4;
  int mlp_hidden = 0;  // 0 means 4 * model_width()
  int default_steps = 16;
  std::uint64_t param_seed = 1;

  int model_width() const { return heads * head_dim; }
  int mlp_width() const { return mlp_hidden > 0 ? mlp_hidden : 4 * model_width(); }
  // Full token layout of the latent video plus text block.
  TokenLayout video_layout() const;
  // Layout the attention maps actually see (additive drops the text block).
  TokenLayout attention_layout() const;
  int sequence_length() const { return attention_layout().total_tokens(); }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class TensorKind { kWeight, kBias, kLnGamma, kLnBeta };

// One named parameter tensor inside the flat parameter vector.
struct Tensor {
  std::string name;
  TensorKind kind = TensorKind::kWeight;
  int rows = 0;
  int cols = 0;  // 1 for vectors
  std::size_t offset = 0;
  int block = -1;  // owning transformer block, -1 for shared/io tensors
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Transformer denoiser over flattened video tokens. Parameters live in one
// flat f64 vector in tensor declaration order; build() quantizes every value
// to f32 precision so checkpoints round-trip losslessly. Immutable models are
// safe to share across threads during inference.
class Model {
 public:
  Model() = default;
  static Model build(const ModelConfig& config);
  static Model from_params(const ModelConfig& config, std::vector<double> params);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& params() { return params_; }
  std::size_t param_count() const { return params_.size(); }
  const Tensor& tensor(const std::string& name) const;  // ConfigError if absent

 private:
  ModelConfig cfg_;
  std::vector<Tensor> tensors_;
  std::vector<double> params_;
};

std::size_t param_count(const ModelConfig& config);
std::vector<Tensor> tensor_registry(const ModelConfig& config);

// Fresh draws for the listed blocks; all other parameters bitwise unchanged.
Model reinit_layers(const Model& model, const std::set<int>& layers, std::uint64_t seed);

// Per-(layer, step, head) interventions with kAny wildcards. Entries merge
// from least to most specific; the most specific setting of each field wins,
// skip sets union, renormalize ANDs, and strict_degenerate_rows ORs.
class InterventionPlan {
 public:
  static constexpr int kAny = -1;

  void set(int layer, int step, int head, AttentionIntervention intervention);
  AttentionIntervention resolve(int layer, int step, int head) const;
  bool empty() const { return entries_.empty(); }
  std::size_t entry_count() const { return entries_.size(); }
  // ConfigError on out-of-range layer/head/step references.
  void validate(const ModelConfig& config, int steps) const;
  std::string summary() const;  // short human-readable description

 private:
  struct Key {
    int layer;
    int step;
    int head;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, AttentionIntervention> entries_;
};

// Which (layer, head, step) attention maps to keep. Disabled by default.
struct CaptureFilter {
  bool enabled = false;
  std::optional<std::set<int>> layers;  // nullopt means all
  std::optional<std::set<int>> heads;
  std::optional<std::set<int>> steps;

  static CaptureFilter all();
  static CaptureFilter none() { return {}; }
  bool matches(int layer, int head, int step) const;
  std::size_t count(const ModelConfig& config, int total_steps) const;
  void validate(const ModelConfig& config, int total_steps) const;
};

// Read-only instrumentation taps. map_probe sees the f64 post-softmax map
// before masking; value_probe sees each head's V block; mask_probe reports
// masking statistics for calls that applied a threshold.
struct RunProbes {
  MapProbe map_probe;
  std::function<void(const AttendTags&, const MatD&)> value_probe;
  std::function<void(const AttendTags&, const MaskStats&)> mask_probe;
};

struct DenoiseOptions {
  InterventionPlan plan;
  CaptureFilter capture;
  std::size_t capture_budget_bytes = std::size_t{1} << 30;
  RunProbes probes;
};

struct DenoiseResult {
  MatD latents;  // (frames * height * width) x latent_dim
  std::vector<AttentionRecord> captures;  // (step, layer, head) ascending
};

// Noise prediction for one noise level. Exposed for tests; denoise() drives it.
// Captured records are appended to *captures when given (no budget check here).
MatD eps_forward(const Model& model, const MatD& latents, const MatD& text,
                 double sigma, int step, const DenoiseOptions& options,
                 std::vector<AttentionRecord>* captures = nullptr);

// Deterministic Euler sampler: x <- x + (sigma_{i+1} - sigma_i) * eps(x, sigma_i).
DenoiseResult denoise(const Model& model, const MatD& initial_noise, const MatD& text,
                      const DenoiseSchedule& schedule, const DenoiseOptions& options = {});

// Deterministic stand-ins for a text encoder and the sampler's seed noise.
MatD make_prompt_embedding(std::uint64_t prompt_seed, const ModelConfig& config);
MatD make_noise(std::uint64_t noise_seed, const ModelConfig& config);

// Token 0 kept bitwise, every later text token zeroed. Idempotent.
MatD first_token_only(const MatD& text);

}  // namespace vdtlab
