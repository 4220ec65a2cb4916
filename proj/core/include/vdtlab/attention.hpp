#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "vdtlab/mat.hpp"

namespace vdtlab {

struct AttentionConfig {
  int num_heads = 1;
  int head_dim = 1;
  double temperature = 1.0;  // base softmax temperature, overridable per call
};

// Identifies where in a run a kernel call sits; stamped onto captures.
struct AttendTags {
  int layer = 0;
  int head = 0;
  int step = 0;
};

// One post-intervention attention map for one head at one layer and step.
// Rows sum to 1 within 1e-6; entries lie in [0, 1]. Skipped heads carry an
// empty map.
struct AttentionRecord {
  int layer = 0;
  int head = 0;
  int step = 0;
  MatF map;
  bool skipped = false;
};

// Per-call override bundle. Resolution order inside attend():
//   1. skip: head in skip_heads -> all-zeros output, empty map.
//   2. map_override: replaces the computed map; temperature and mask ignored.
//   3. temperature: replaces config.temperature in the logit scale.
//   4. mask_threshold: entries strictly below are zeroed; rows that lost an
//      entry are rescaled to sum 1 when renormalize is set. A row losing
//      every entry keeps its single largest entry at weight 1, or throws
//      DegenerateRowError under strict_degenerate_rows.
struct AttentionIntervention {
  std::optional<double> temperature;
  std::optional<double> mask_threshold;  // absolute value in [0, 1]
  std::set<int> skip_heads;
  std::shared_ptr<const MatF> map_override;
  bool renormalize = true;
  bool strict_degenerate_rows = false;
};

struct MaskStats {
  long long masked_entries = 0;
  long long total_entries = 0;  // n*n when a mask was applied, else 0
  int degenerate_rows = 0;
  double removed_mass = 0.0;  // pre-renormalization mass zeroed across rows
};

struct Attended {
  MatD output;  // n x d_v
  AttentionRecord record;
  MaskStats stats;
};

// Observes the full-precision post-softmax map before masking. Not invoked
// for skipped heads or map overrides (no map is computed there).
using MapProbe = std::function<void(const AttendTags&, const MatD&)>;

// Single-head scaled-dot-product bidirectional attention with interventions.
// logits = Q K^T / (sqrt(d_k) * T); map = row softmax (row max subtracted);
// output = map * V with the map quantized to f32 and products accumulated in
// f64. Pure function: safe to call concurrently.
Attended attend(const MatD& Q, const MatD& K, const MatD& V,
                const AttentionConfig& config,
                const AttentionIntervention& intervention = {},
                const AttendTags& tags = {}, const MapProbe& probe = nullptr);

// Shannon entropy in nats per row; 0*log0 counts as 0. Rows must be
// stochastic within 1e-6 with entries in [0, 1].
std::vector<double> row_entropy(const MatF& map);
std::vector<double> row_entropy(const MatD& map);

}  // namespace vdtlab
