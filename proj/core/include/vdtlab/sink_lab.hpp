#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "vdtlab/attention.hpp"
#include "vdtlab/mat.hpp"
#include "vdtlab/model.hpp"
#include "vdtlab/schedule.hpp"
#include "vdtlab/token_layout.hpp"

namespace vdtlab {

// A head is a sink when more than tau_q of its query rows put weight >= tau_w
// on one key column.
struct SinkCriterion {
  double tau_w = 0.3;
  double tau_q = 0.5;
  void validate() const;  // ConfigError unless both lie in (0, 1]
};

// The qualifying key column with the largest qualifying row fraction, ties to
// the lowest index; nullopt when no column's fraction strictly exceeds tau_q.
std::optional<int> detect_sinks(const MatF& map, const SinkCriterion& criterion);
std::optional<int> detect_sinks(const MatD& map, const SinkCriterion& criterion);
// Skipped records (empty map) are never sinks.
std::optional<int> detect_sinks(const AttentionRecord& record, const SinkCriterion& criterion);

struct ValueNormProfile {
  double sink_norm = 0.0;   // Euclidean norm of the sink row
  double other_norm = 0.0;  // mean norm over the remaining rows
  double ratio = 0.0;       // sink / other; 1 when both are 0
};

ValueNormProfile value_norm_profile(const MatD& values, int position);

struct SinkFlagRecord {
  int prompt = 0;
  int layer = 0;
  int head = 0;
  int step = 0;
  int position = 0;  // sequence index of the sink key
};

struct SinkStepNorms {
  int step = 0;
  double sink_norm = 0.0;   // mean over flagged sites at this step
  double other_norm = 0.0;
  double ratio = 0.0;
};

struct SinkReport {
  int layers = 0;
  int heads = 0;
  int steps = 0;
  int prompts = 0;
  TokenLayout layout;
  std::vector<SinkFlagRecord> flags;
  // Fraction of prompts flagged, per (layer*heads + head) row and step column.
  MatD frequency;
  // Mean over steps of the row above: flagged steps / total steps, averaged
  // over prompts.
  std::vector<double> head_frequency;
  std::vector<std::vector<int>> spatial;  // height x width counts, vision sinks
  std::vector<int> temporal;              // per-frame counts, vision sinks
  int text_sink_count = 0;  // sinks at text positions, outside the histograms
  std::vector<SinkStepNorms> value_norms;  // probe-based runs only

  int total_flags() const { return static_cast<int>(flags.size()); }
};

// Aggregates detection over per-prompt record collections. Records must share
// the layout's sequence length; value norms stay empty on this path.
SinkReport sink_statistics(const std::vector<std::vector<AttentionRecord>>& per_prompt,
                           const TokenLayout& layout, const SinkCriterion& criterion);

// Runs one unmodified pass per prompt seed and detects on the f32-quantized
// maps without storing them; also profiles value norms at flagged sites.
SinkReport sink_statistics_over_prompts(const Model& model,
                                        const std::vector<std::uint64_t>& prompt_seeds,
                                        std::uint64_t noise_seed,
                                        const DenoiseSchedule& schedule,
                                        const SinkCriterion& criterion, int jobs = 1);

enum class SkipMode { kDetected, kRandomMatched, kManual };

inline constexpr std::uint64_t kRandomSkipSalt = 0x534B4950484541ULL;

struct SkipHeadsResult {
  MatD latents;
  MatD baseline;
  double mse = 0.0;
  double psnr = 0.0;
  std::vector<std::pair<int, int>> sink_heads;     // detected (layer, head)
  std::vector<std::pair<int, int>> skipped_heads;  // actually zeroed
  double skipped_fraction = 0.0;                   // skipped / (layers * heads)
};

// kDetected zeroes every head flagged at any step of the baseline run.
// kRandomMatched zeroes an equal count of non-sink heads drawn with a rng
// seeded from (prompt_seed, salt); more sinks than non-sinks is a ConfigError.
// kManual zeroes exactly manual_heads.
SkipHeadsResult skip_heads_run(const Model& model, std::uint64_t prompt_seed,
                               std::uint64_t noise_seed, const DenoiseSchedule& schedule,
                               const SinkCriterion& criterion, SkipMode mode,
                               const std::set<std::pair<int, int>>& manual_heads = {},
                               std::uint64_t salt = kRandomSkipSalt);

}  // namespace vdtlab
