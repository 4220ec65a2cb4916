#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "vdtlab/mat.hpp"
#include "vdtlab/model.hpp"
#include "vdtlab/schedule.hpp"

namespace vdtlab {

// Lower empirical quantile with ties kept: the largest threshold q such that
// masking entries strictly below q removes a fraction <= k. Non-decreasing
// in k for fixed weights.
double quantile_threshold(std::vector<double> weights, double k);

struct MaskPlan {
  double k = 0.0;                 // bottom fraction to mask, in [0, 1)
  std::set<int> included_layers;  // empty means all layers
  std::set<int> excluded_layers;

  void validate(const ModelConfig& config) const;
  std::set<int> effective_layers(const ModelConfig& config) const;
};

struct MaskSiteStat {
  int layer = 0;
  int head = 0;
  int step = 0;
  double threshold = 0.0;
  // Fraction strictly below the threshold in the pass-1 map the threshold was
  // computed from; exact by construction of the quantile.
  double source_fraction = 0.0;
  // Fraction actually zeroed when the threshold was applied in pass 2, where
  // the maps have drifted from pass 1.
  double applied_fraction = 0.0;
  double removed_mass = 0.0;  // pre-renormalization probability mass removed
};

struct DegradationReport {
  double k = 0.0;
  std::set<int> included_layers;
  std::set<int> excluded_layers;
  int layer = -1;  // the single included layer for sensitivity rows, else -1
  double mse = 0.0;
  double psnr = 0.0;
  double mean_source_fraction = 0.0;
  double mean_applied_fraction = 0.0;
  double mean_removed_mass = 0.0;  // renormalization-drift statistic
  std::vector<MaskSiteStat> sites;  // (step, layer, head) ascending
};

struct OracleRunResult {
  MatD latents;   // pass-2 (masked) final latents
  MatD baseline;  // pass-1 final latents
  DegradationReport report;
};

// Pass 1 runs unmodified and streams every included layer's maps through a
// probe to compute per-(layer, head, step) thresholds; pass 2 reruns with the
// thresholds applied as mask interventions. Both passes share seeds and
// schedule, and pass 1 is bitwise identical to an unprobed baseline.
OracleRunResult oracle_masked_run(const Model& model, std::uint64_t prompt_seed,
                                  std::uint64_t noise_seed,
                                  const DenoiseSchedule& schedule, const MaskPlan& plan);

// One single-layer oracle run per layer, sharing the pass-1 probe run.
// Reports sorted by MSE descending (most sensitive layer first).
std::vector<DegradationReport> layer_sensitivity_sweep(
    const Model& model, std::uint64_t prompt_seed, std::uint64_t noise_seed,
    const DenoiseSchedule& schedule, double k, int jobs = 1);

// One oracle run per k over all layers minus the exclusion, sharing pass 1.
// Reports in ascending-k order.
std::vector<DegradationReport> exclusion_sweep(
    const Model& model, std::uint64_t prompt_seed, std::uint64_t noise_seed,
    const DenoiseSchedule& schedule, std::vector<double> ks,
    const std::set<int>& excluded_layers, int jobs = 1);

struct TemperaturePoint {
  double temperature = 1.0;
  double mean_entropy = 0.0;  // mean row entropy of the intervened layer's maps
  double mse = 0.0;           // final latents vs the unmodified run
  double psnr = 0.0;
  MatD latents;
};

// One run per temperature with a single-layer temperature override.
// Points keep the input order of temperatures.
std::vector<TemperaturePoint> temperature_sweep(
    const Model& model, std::uint64_t prompt_seed, std::uint64_t noise_seed,
    const DenoiseSchedule& schedule, int layer, std::vector<double> temperatures,
    int jobs = 1);

}  // namespace vdtlab
