#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "vdtlab/mat.hpp"
#include "vdtlab/model.hpp"
#include "vdtlab/schedule.hpp"
#include "vdtlab/serialize.hpp"

namespace vdtlab {

struct RecordedTrace {
  AttentionTrace trace;
  MatD source_latents;
};

// Source-run capture: one unmodified run with the given filter; the trace
// embeds the run manifest and is complete for the filter.
RecordedTrace record_trace(const Model& model, std::uint64_t prompt_seed,
                           std::uint64_t noise_seed, const DenoiseSchedule& schedule,
                           const CaptureFilter& filter,
                           std::size_t capture_budget_bytes = std::size_t{1} << 30);

struct TransferResult {
  MatD latents;
  MatD target_baseline;
  double mse_to_source = 0.0;
  double mse_to_target_baseline = 0.0;
  // Distance of the untouched target run to the source, for directional
  // comparisons against mse_to_source.
  double baseline_mse_to_source = 0.0;
};

// Replays a target run with every (layer in subset, head, step) attention map
// replaced verbatim by the trace's map; V still comes from the target run.
// Layout, config, or schedule disagreement raises IncompatibilityError naming
// the field; the subset must be fully covered by the trace.
TransferResult replay_with_transfer(const Model& model, std::uint64_t target_prompt_seed,
                                    std::uint64_t noise_seed,
                                    const DenoiseSchedule& schedule,
                                    const RecordedTrace& recorded,
                                    const std::set<int>& layer_subset);

struct LayerTransferPoint {
  int layer = 0;
  double mse_to_source = 0.0;
  double mse_to_target_baseline = 0.0;
};

// One single-layer replay per traced layer, sorted by mse_to_source ascending
// (the layer whose transfer pulls the output closest to the source first).
std::vector<LayerTransferPoint> layerwise_transfer_study(
    const Model& model, const RecordedTrace& recorded, std::uint64_t target_prompt_seed,
    std::uint64_t noise_seed, const DenoiseSchedule& schedule, int jobs = 1);

}  // namespace vdtlab
