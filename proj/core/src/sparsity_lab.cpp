#include "vdtlab/sparsity_lab.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "vdtlab/attention.hpp"
#include "vdtlab/errors.hpp"
#include "vdtlab/parallel.hpp"

namespace vdtlab {

namespace {

std::size_t lower_quantile_index(double k, std::size_t n) {
  std::size_t idx =
      static_cast<std::size_t>(std::floor(k * static_cast<double>(n) + 1e-9));
  return idx >= n ? n - 1 : idx;
}

void check_fraction(double k) {
  if (!(k >= 0.0) || k >= 1.0)
    throw ContractError("mask fraction must lie in [0, 1)");
}

}  // namespace

double quantile_threshold(std::vector<double> weights, double k) {
  if (weights.empty())
    throw ContractError("quantile threshold of an empty weight set");
  check_fraction(k);
  std::sort(weights.begin(), weights.end());
  return weights[lower_quantile_index(k, weights.size())];
}

void MaskPlan::validate(const ModelConfig& config) const {
  if (!(k >= 0.0) || k >= 1.0)
    throw ConfigError("mask fraction must lie in [0, 1)");
  for (int l : included_layers)
    if (l < 0 || l >= config.layers)
      throw ConfigError("included layer " + std::to_string(l) + " out of range");
  for (int l : excluded_layers)
    if (l < 0 || l >= config.layers)
      throw ConfigError("excluded layer " + std::to_string(l) + " out of range");
  for (int l : included_layers)
    if (excluded_layers.count(l))
      throw ConfigError("layer " + std::to_string(l) + " both included and excluded");
}

std::set<int> MaskPlan::effective_layers(const ModelConfig& config) const {
  std::set<int> layers;
  if (included_layers.empty())
    for (int l = 0; l < config.layers; ++l) layers.insert(l);
  else
    layers = included_layers;
  for (int l : excluded_layers) layers.erase(l);
  return layers;
}

namespace {

struct SiteThreshold {
  int layer = 0;
  int head = 0;
  int step = 0;
  double threshold = 0.0;
  double source_fraction = 0.0;
};

struct PassOne {
  MatD baseline;
  std::vector<std::vector<SiteThreshold>> per_k;  // execution order per k
};

// One unmodified run; every probed map is sorted once and thresholds for all
// requested fractions are read off it. Nothing about the run itself changes,
// so the baseline equals an unprobed run bitwise.
PassOne threshold_pass(const Model& model, std::uint64_t prompt_seed,
                       std::uint64_t noise_seed, const DenoiseSchedule& schedule,
                       const std::set<int>& layers, const std::vector<double>& ks) {
  for (double k : ks) check_fraction(k);
  PassOne out;
  out.per_k.resize(ks.size());
  const MatD text = make_prompt_embedding(prompt_seed, model.config());
  const MatD noise = make_noise(noise_seed, model.config());
  DenoiseOptions opts;
  std::vector<double> flat;
  opts.probes.map_probe = [&](const AttendTags& tags, const MatD& map) {
    if (!layers.count(tags.layer)) return;
    flat.assign(map.data(), map.data() + map.size());
    std::sort(flat.begin(), flat.end());
    const double n = static_cast<double>(flat.size());
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      const double thr = flat[lower_quantile_index(ks[ki], flat.size())];
      const auto below = std::lower_bound(flat.begin(), flat.end(), thr) - flat.begin();
      out.per_k[ki].push_back({tags.layer, tags.head, tags.step, thr,
                               static_cast<double>(below) / n});
    }
  };
  out.baseline = denoise(model, noise, text, schedule, opts).latents;
  return out;
}

// Second pass with the thresholds applied as per-site mask interventions.
OracleRunResult masked_pass(const Model& model, std::uint64_t prompt_seed,
                            std::uint64_t noise_seed, const DenoiseSchedule& schedule,
                            const std::vector<SiteThreshold>& sites, MatD baseline) {
  OracleRunResult out;
  DegradationReport& rep = out.report;
  if (sites.empty()) {
    out.latents = baseline;
    out.baseline = std::move(baseline);
    rep.psnr = psnr_from_mse(0.0, max_abs(out.baseline));
    return out;
  }
  const MatD text = make_prompt_embedding(prompt_seed, model.config());
  const MatD noise = make_noise(noise_seed, model.config());
  DenoiseOptions opts;
  for (const SiteThreshold& s : sites) {
    AttentionIntervention iv;
    iv.mask_threshold = s.threshold;
    opts.plan.set(s.layer, s.step, s.head, iv);
  }
  rep.sites.reserve(sites.size());
  std::size_t pos = 0;
  opts.probes.mask_probe = [&](const AttendTags& tags, const MaskStats& ms) {
    if (pos >= sites.size() || sites[pos].layer != tags.layer ||
        sites[pos].head != tags.head || sites[pos].step != tags.step)
      throw ContractError("mask statistics arrived out of pass-1 order");
    MaskSiteStat st;
    st.layer = tags.layer;
    st.head = tags.head;
    st.step = tags.step;
    st.threshold = sites[pos].threshold;
    st.source_fraction = sites[pos].source_fraction;
    st.applied_fraction =
        ms.total_entries > 0
            ? static_cast<double>(ms.masked_entries) / static_cast<double>(ms.total_entries)
            : 0.0;
    st.removed_mass = ms.removed_mass;
    rep.sites.push_back(st);
    ++pos;
  };
  out.latents = denoise(model, noise, text, schedule, opts).latents;
  out.baseline = std::move(baseline);
  rep.mse = mse(out.latents, out.baseline);
  rep.psnr = psnr_from_mse(rep.mse, max_abs(out.baseline));
  for (const MaskSiteStat& st : rep.sites) {
    rep.mean_source_fraction += st.source_fraction;
    rep.mean_applied_fraction += st.applied_fraction;
    rep.mean_removed_mass += st.removed_mass;
  }
  if (!rep.sites.empty()) {
    rep.mean_source_fraction /= rep.sites.size();
    rep.mean_applied_fraction /= rep.sites.size();
    rep.mean_removed_mass /= rep.sites.size();
  }
  return out;
}

void stamp_plan(DegradationReport& rep, const MaskPlan& plan) {
  rep.k = plan.k;
  rep.included_layers = plan.included_layers;
  rep.excluded_layers = plan.excluded_layers;
  if (plan.included_layers.size() == 1 && plan.excluded_layers.empty())
    rep.layer = *plan.included_layers.begin();
}

}  // namespace

OracleRunResult oracle_masked_run(const Model& model, std::uint64_t prompt_seed,
                                  std::uint64_t noise_seed,
                                  const DenoiseSchedule& schedule, const MaskPlan& plan) {
  plan.validate(model.config());
  const std::set<int> layers = plan.effective_layers(model.config());
  PassOne p1 = threshold_pass(model, prompt_seed, noise_seed, schedule, layers, {plan.k});
  OracleRunResult out = masked_pass(model, prompt_seed, noise_seed, schedule,
                                    p1.per_k[0], std::move(p1.baseline));
  stamp_plan(out.report, plan);
  return out;
}

std::vector<DegradationReport> layer_sensitivity_sweep(
    const Model& model, std::uint64_t prompt_seed, std::uint64_t noise_seed,
    const DenoiseSchedule& schedule, double k, int jobs) {
  MaskPlan all;
  all.k = k;
  all.validate(model.config());
  const std::set<int> layers = all.effective_layers(model.config());
  PassOne p1 = threshold_pass(model, prompt_seed, noise_seed, schedule, layers, {k});

  std::vector<DegradationReport> reports(model.config().layers);
  parallel_for(jobs, reports.size(), [&](std::size_t li) {
    const int layer = static_cast<int>(li);
    std::vector<SiteThreshold> sites;
    for (const SiteThreshold& s : p1.per_k[0])
      if (s.layer == layer) sites.push_back(s);
    OracleRunResult r =
        masked_pass(model, prompt_seed, noise_seed, schedule, sites, p1.baseline);
    MaskPlan single;
    single.k = k;
    single.included_layers = {layer};
    stamp_plan(r.report, single);
    reports[li] = std::move(r.report);
  });
  std::stable_sort(reports.begin(), reports.end(),
                   [](const DegradationReport& a, const DegradationReport& b) {
                     return a.mse > b.mse;
                   });
  return reports;
}

std::vector<DegradationReport> exclusion_sweep(
    const Model& model, std::uint64_t prompt_seed, std::uint64_t noise_seed,
    const DenoiseSchedule& schedule, std::vector<double> ks,
    const std::set<int>& excluded_layers, int jobs) {
  if (ks.empty()) throw ContractError("exclusion sweep needs at least one k");
  for (std::size_t i = 1; i < ks.size(); ++i)
    if (ks[i] < ks[i - 1]) throw ContractError("k values must be sorted ascending");
  MaskPlan base;
  base.k = ks.front();
  base.excluded_layers = excluded_layers;
  base.validate(model.config());
  const std::set<int> layers = base.effective_layers(model.config());
  PassOne p1 = threshold_pass(model, prompt_seed, noise_seed, schedule, layers, ks);

  std::vector<DegradationReport> reports(ks.size());
  parallel_for(jobs, ks.size(), [&](std::size_t ki) {
    OracleRunResult r = masked_pass(model, prompt_seed, noise_seed, schedule,
                                    p1.per_k[ki], p1.baseline);
    MaskPlan plan;
    plan.k = ks[ki];
    plan.excluded_layers = excluded_layers;
    stamp_plan(r.report, plan);
    reports[ki] = std::move(r.report);
  });
  return reports;
}

std::vector<TemperaturePoint> temperature_sweep(
    const Model& model, std::uint64_t prompt_seed, std::uint64_t noise_seed,
    const DenoiseSchedule& schedule, int layer, std::vector<double> temperatures,
    int jobs) {
  if (layer < 0 || layer >= model.config().layers)
    throw ConfigError("temperature sweep layer out of range");
  for (double t : temperatures)
    if (!(t > 0.0)) throw ConfigError("temperatures must be positive");

  const MatD text = make_prompt_embedding(prompt_seed, model.config());
  const MatD noise = make_noise(noise_seed, model.config());
  const MatD baseline = denoise(model, noise, text, schedule).latents;
  const double peak = max_abs(baseline);

  std::vector<TemperaturePoint> points(temperatures.size());
  parallel_for(jobs, temperatures.size(), [&](std::size_t ti) {
    DenoiseOptions opts;
    AttentionIntervention iv;
    iv.temperature = temperatures[ti];
    opts.plan.set(layer, InterventionPlan::kAny, InterventionPlan::kAny, iv);
    opts.capture.enabled = true;
    opts.capture.layers = std::set<int>{layer};
    DenoiseResult run = denoise(model, noise, text, schedule, opts);

    TemperaturePoint& p = points[ti];
    p.temperature = temperatures[ti];
    double total = 0.0;
    std::size_t rows = 0;
    for (const AttentionRecord& rec : run.captures) {
      for (double h : row_entropy(rec.map)) total += h;
      rows += rec.map.rows();
    }
    p.mean_entropy = rows > 0 ? total / static_cast<double>(rows) : 0.0;
    p.mse = mse(run.latents, baseline);
    p.psnr = psnr_from_mse(p.mse, peak);
    p.latents = std::move(run.latents);
  });
  return points;
}

}  // namespace vdtlab
