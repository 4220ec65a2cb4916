#include "vdtlab/transfer_lab.hpp"

#include <algorithm>
#include <memory>
#include <string>
#include <utility>

#include "vdtlab/errors.hpp"
#include "vdtlab/manifest.hpp"
#include "vdtlab/parallel.hpp"

namespace vdtlab {

RecordedTrace record_trace(const Model& model, std::uint64_t prompt_seed,
                           std::uint64_t noise_seed, const DenoiseSchedule& schedule,
                           const CaptureFilter& filter,
                           std::size_t capture_budget_bytes) {
  if (!filter.enabled || filter.count(model.config(), schedule.steps()) == 0)
    throw ConfigError("trace recording needs a nonempty capture filter");
  const ModelConfig& cfg = model.config();
  const MatD text = make_prompt_embedding(prompt_seed, cfg);
  const MatD noise = make_noise(noise_seed, cfg);
  DenoiseOptions opts;
  opts.capture = filter;
  opts.capture_budget_bytes = capture_budget_bytes;
  DenoiseResult run = denoise(model, noise, text, schedule, opts);

  RecordedTrace out;
  out.source_latents = std::move(run.latents);
  AttentionTrace& trace = out.trace;
  trace.layout = cfg.attention_layout();
  trace.layers = cfg.layers;
  trace.heads = cfg.heads;
  trace.steps = schedule.steps();
  const std::size_t bits =
      static_cast<std::size_t>(cfg.layers) * cfg.heads * schedule.steps();
  trace.filter_bitmap.assign((bits + 7) / 8, 0);
  for (int s = 0; s < schedule.steps(); ++s)
    for (int l = 0; l < cfg.layers; ++l)
      for (int h = 0; h < cfg.heads; ++h)
        if (filter.matches(l, h, s)) {
          const std::size_t bit = trace.bit_index(l, h, s);
          trace.filter_bitmap[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
        }
  trace.manifest_json =
      manifest_to_json(make_manifest(cfg, prompt_seed, noise_seed, schedule));
  trace.records = std::move(run.captures);
  trace.validate();
  return out;
}

TransferResult replay_with_transfer(const Model& model, std::uint64_t target_prompt_seed,
                                    std::uint64_t noise_seed,
                                    const DenoiseSchedule& schedule,
                                    const RecordedTrace& recorded,
                                    const std::set<int>& layer_subset) {
  const ModelConfig& cfg = model.config();
  const AttentionTrace& trace = recorded.trace;
  trace.validate();
  if (trace.layout != cfg.attention_layout())
    throw IncompatibilityError("layout",
                               "trace token layout does not match the model");
  if (trace.layers != cfg.layers || trace.heads != cfg.heads)
    throw IncompatibilityError("config", "trace head grid does not match the model");
  const RunManifest manifest = manifest_from_json(trace.manifest_json);
  if (!(manifest.config == cfg))
    throw IncompatibilityError("config", "trace was recorded with a different config");
  if (trace.steps != schedule.steps() || manifest.sigmas != schedule.sigmas)
    throw IncompatibilityError("schedule", "trace schedule does not match the replay");
  for (int l : layer_subset) {
    if (l < 0 || l >= cfg.layers)
      throw IncompatibilityError("layers", "transfer layer " + std::to_string(l) +
                                               " out of range");
    for (int s = 0; s < trace.steps; ++s)
      for (int h = 0; h < cfg.heads; ++h)
        if (!trace.find(l, h, s))
          throw IncompatibilityError("layers", "trace does not cover layer " +
                                                   std::to_string(l));
  }

  const MatD text = make_prompt_embedding(target_prompt_seed, cfg);
  const MatD noise = make_noise(noise_seed, cfg);
  TransferResult res;
  res.target_baseline = denoise(model, noise, text, schedule).latents;

  if (layer_subset.empty()) {
    res.latents = res.target_baseline;
  } else {
    DenoiseOptions opts;
    for (int l : layer_subset)
      for (int s = 0; s < trace.steps; ++s)
        for (int h = 0; h < cfg.heads; ++h) {
          const AttentionRecord* rec = trace.find(l, h, s);
          AttentionIntervention iv;
          iv.map_override = std::shared_ptr<const MatF>(std::shared_ptr<void>(), &rec->map);
          opts.plan.set(l, s, h, std::move(iv));
        }
    res.latents = denoise(model, noise, text, schedule, opts).latents;
  }
  res.mse_to_source = mse(res.latents, recorded.source_latents);
  res.mse_to_target_baseline = mse(res.latents, res.target_baseline);
  res.baseline_mse_to_source = mse(res.target_baseline, recorded.source_latents);
  return res;
}

std::vector<LayerTransferPoint> layerwise_transfer_study(
    const Model& model, const RecordedTrace& recorded, std::uint64_t target_prompt_seed,
    std::uint64_t noise_seed, const DenoiseSchedule& schedule, int jobs) {
  const std::set<int> layers = recorded.trace.traced_layers();
  if (layers.empty()) throw ContractError("trace covers no layers");
  std::vector<int> order(layers.begin(), layers.end());
  std::vector<LayerTransferPoint> points(order.size());
  parallel_for(jobs, order.size(), [&](std::size_t i) {
    const TransferResult r = replay_with_transfer(model, target_prompt_seed, noise_seed,
                                                  schedule, recorded, {order[i]});
    points[i] = {order[i], r.mse_to_source, r.mse_to_target_baseline};
  });
  std::stable_sort(points.begin(), points.end(),
                   [](const LayerTransferPoint& a, const LayerTransferPoint& b) {
                     return a.mse_to_source < b.mse_to_source;
                   });
  return points;
}

}  // namespace vdtlab
