#include "vdtlab/sink_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "vdtlab/errors.hpp"
#include "vdtlab/parallel.hpp"
#include "vdtlab/rng.hpp"

namespace vdtlab {

void SinkCriterion::validate() const {
  if (!(tau_w > 0.0) || tau_w > 1.0 || !(tau_q > 0.0) || tau_q > 1.0)
    throw ConfigError("sink thresholds must lie in (0, 1]");
}

namespace {

template <typename T>
std::optional<int> detect_impl(const Matrix<T>& map, const SinkCriterion& criterion) {
  criterion.validate();
  const int n = map.rows();
  if (n < 1 || map.cols() != n)
    throw ShapeError("sink detection requires a square nonempty map");
  std::vector<int> qualifying(map.cols(), 0);
  for (int i = 0; i < n; ++i) {
    auto row = map.row(i);
    for (int j = 0; j < map.cols(); ++j)
      if (static_cast<double>(row[j]) >= criterion.tau_w) ++qualifying[j];
  }
  const double bar = criterion.tau_q * static_cast<double>(n);
  int best = -1;
  int best_count = 0;
  for (int j = 0; j < map.cols(); ++j) {
    if (static_cast<double>(qualifying[j]) <= bar) continue;
    if (qualifying[j] > best_count) {
      best = j;
      best_count = qualifying[j];
    }
  }
  if (best < 0) return std::nullopt;
  return best;
}

double row_norm(const MatD& values, int i) {
  double acc = 0.0;
  auto row = values.row(i);
  for (int c = 0; c < values.cols(); ++c) acc += row[c] * row[c];
  return std::sqrt(acc);
}

SinkReport build_report(std::vector<SinkFlagRecord> flags, int layers, int heads,
                        int steps, int prompts, const TokenLayout& layout) {
  SinkReport rep;
  rep.layers = layers;
  rep.heads = heads;
  rep.steps = steps;
  rep.prompts = prompts;
  rep.layout = layout;
  rep.flags = std::move(flags);
  rep.frequency = MatD(layers * heads, steps);
  rep.head_frequency.assign(static_cast<std::size_t>(layers) * heads, 0.0);
  rep.spatial.assign(layout.height, std::vector<int>(layout.width, 0));
  rep.temporal.assign(layout.frames, 0);
  for (const SinkFlagRecord& f : rep.flags) {
    rep.frequency(f.layer * heads + f.head, f.step) += 1.0;
    if (is_text_index(layout, f.position)) {
      ++rep.text_sink_count;
    } else {
      const Coord c = unflatten_index(layout, f.position);
      ++rep.spatial[c.row][c.col];
      ++rep.temporal[c.frame];
    }
  }
  if (prompts > 0) {
    for (std::size_t i = 0; i < rep.frequency.size(); ++i)
      rep.frequency.data()[i] /= prompts;
  }
  for (int gh = 0; gh < layers * heads; ++gh) {
    double acc = 0.0;
    for (int s = 0; s < steps; ++s) acc += rep.frequency(gh, s);
    rep.head_frequency[gh] = steps > 0 ? acc / steps : 0.0;
  }
  return rep;
}

}  // namespace

std::optional<int> detect_sinks(const MatF& map, const SinkCriterion& criterion) {
  return detect_impl(map, criterion);
}

std::optional<int> detect_sinks(const MatD& map, const SinkCriterion& criterion) {
  return detect_impl(map, criterion);
}

std::optional<int> detect_sinks(const AttentionRecord& record,
                                const SinkCriterion& criterion) {
  if (record.skipped || record.map.empty()) {
    criterion.validate();
    return std::nullopt;
  }
  return detect_impl(record.map, criterion);
}

ValueNormProfile value_norm_profile(const MatD& values, int position) {
  if (values.rows() <= 1)
    throw NotApplicableError("value-norm profile needs at least two rows");
  if (position < 0 || position >= values.rows())
    throw BoundsError("sink position out of range");
  ValueNormProfile p;
  p.sink_norm = row_norm(values, position);
  double acc = 0.0;
  for (int i = 0; i < values.rows(); ++i)
    if (i != position) acc += row_norm(values, i);
  p.other_norm = acc / (values.rows() - 1);
  if (p.other_norm > 0.0)
    p.ratio = p.sink_norm / p.other_norm;
  else
    p.ratio = p.sink_norm == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return p;
}

SinkReport sink_statistics(const std::vector<std::vector<AttentionRecord>>& per_prompt,
                           const TokenLayout& layout, const SinkCriterion& criterion) {
  criterion.validate();
  layout.validate();
  std::size_t total = 0;
  for (const auto& records : per_prompt) total += records.size();
  if (total == 0) throw ContractError("sink statistics over an empty record set");

  int layers = 0, heads = 0, steps = 0;
  std::vector<SinkFlagRecord> flags;
  for (std::size_t p = 0; p < per_prompt.size(); ++p) {
    for (const AttentionRecord& rec : per_prompt[p]) {
      layers = std::max(layers, rec.layer + 1);
      heads = std::max(heads, rec.head + 1);
      steps = std::max(steps, rec.step + 1);
      if (!rec.skipped && rec.map.rows() != layout.total_tokens())
        throw ShapeError("record sequence length does not match the layout");
      if (auto pos = detect_sinks(rec, criterion))
        flags.push_back({static_cast<int>(p), rec.layer, rec.head, rec.step, *pos});
    }
  }
  return build_report(std::move(flags), layers, heads, steps,
                      static_cast<int>(per_prompt.size()), layout);
}

SinkReport sink_statistics_over_prompts(const Model& model,
                                        const std::vector<std::uint64_t>& prompt_seeds,
                                        std::uint64_t noise_seed,
                                        const DenoiseSchedule& schedule,
                                        const SinkCriterion& criterion, int jobs) {
  criterion.validate();
  if (prompt_seeds.empty())
    throw ContractError("sink statistics need at least one prompt seed");
  const ModelConfig& cfg = model.config();
  const TokenLayout layout = cfg.attention_layout();

  struct NormAcc {
    double sink = 0.0, other = 0.0;
    int count = 0;
  };
  std::vector<std::vector<SinkFlagRecord>> flags(prompt_seeds.size());
  std::vector<std::vector<NormAcc>> norms(prompt_seeds.size());
  parallel_for(jobs, prompt_seeds.size(), [&](std::size_t p) {
    norms[p].assign(schedule.steps(), NormAcc{});
    const MatD text = make_prompt_embedding(prompt_seeds[p], cfg);
    const MatD noise = make_noise(noise_seed, cfg);
    DenoiseOptions opts;
    MatD last_v;
    opts.probes.value_probe = [&](const AttendTags&, const MatD& v) { last_v = v; };
    opts.probes.map_probe = [&](const AttendTags& tags, const MatD& map) {
      const auto pos = detect_sinks(to_f32(map), criterion);
      if (!pos) return;
      flags[p].push_back({static_cast<int>(p), tags.layer, tags.head, tags.step, *pos});
      if (last_v.rows() > 1) {
        const ValueNormProfile vp = value_norm_profile(last_v, *pos);
        NormAcc& acc = norms[p][tags.step];
        acc.sink += vp.sink_norm;
        acc.other += vp.other_norm;
        ++acc.count;
      }
    };
    denoise(model, noise, text, schedule, opts);
  });

  std::vector<SinkFlagRecord> merged;
  for (auto& f : flags) merged.insert(merged.end(), f.begin(), f.end());
  SinkReport rep = build_report(std::move(merged), cfg.layers, cfg.heads,
                                schedule.steps(), static_cast<int>(prompt_seeds.size()),
                                layout);
  for (int s = 0; s < schedule.steps(); ++s) {
    double sink = 0.0, other = 0.0;
    int count = 0;
    for (const auto& per_prompt : norms) {
      sink += per_prompt[s].sink;
      other += per_prompt[s].other;
      count += per_prompt[s].count;
    }
    if (count == 0) continue;
    SinkStepNorms sn;
    sn.step = s;
    sn.sink_norm = sink / count;
    sn.other_norm = other / count;
    if (sn.other_norm > 0.0)
      sn.ratio = sn.sink_norm / sn.other_norm;
    else
      sn.ratio = sn.sink_norm == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    rep.value_norms.push_back(sn);
  }
  return rep;
}

SkipHeadsResult skip_heads_run(const Model& model, std::uint64_t prompt_seed,
                               std::uint64_t noise_seed, const DenoiseSchedule& schedule,
                               const SinkCriterion& criterion, SkipMode mode,
                               const std::set<std::pair<int, int>>& manual_heads,
                               std::uint64_t salt) {
  criterion.validate();
  const ModelConfig& cfg = model.config();
  const MatD text = make_prompt_embedding(prompt_seed, cfg);
  const MatD noise = make_noise(noise_seed, cfg);

  std::set<std::pair<int, int>> sinks;
  DenoiseOptions detect_opts;
  detect_opts.probes.map_probe = [&](const AttendTags& tags, const MatD& map) {
    if (sinks.count({tags.layer, tags.head})) return;
    if (detect_sinks(to_f32(map), criterion)) sinks.insert({tags.layer, tags.head});
  };
  SkipHeadsResult res;
  res.baseline = denoise(model, noise, text, schedule, detect_opts).latents;
  res.sink_heads.assign(sinks.begin(), sinks.end());

  std::set<std::pair<int, int>> to_skip;
  switch (mode) {
    case SkipMode::kDetected:
      to_skip = sinks;
      break;
    case SkipMode::kRandomMatched: {
      std::vector<std::pair<int, int>> pool;
      for (int l = 0; l < cfg.layers; ++l)
        for (int h = 0; h < cfg.heads; ++h)
          if (!sinks.count({l, h})) pool.push_back({l, h});
      if (sinks.size() > pool.size())
        throw ConfigError("matched random skip wants " + std::to_string(sinks.size()) +
                          " heads but only " + std::to_string(pool.size()) +
                          " non-sink heads exist");
      Rng rng(mix_seed(prompt_seed, salt));
      for (std::size_t i = 0; i < sinks.size(); ++i) {
        const std::size_t j =
            rng.uniform_int(static_cast<int>(i), static_cast<int>(pool.size()) - 1);
        std::swap(pool[i], pool[j]);
      }
      to_skip.insert(pool.begin(), pool.begin() + sinks.size());
      break;
    }
    case SkipMode::kManual:
      for (const auto& [l, h] : manual_heads)
        if (l < 0 || l >= cfg.layers || h < 0 || h >= cfg.heads)
          throw ConfigError("manual skip head (" + std::to_string(l) + ", " +
                            std::to_string(h) + ") out of range");
      to_skip = manual_heads;
      break;
  }

  res.skipped_heads.assign(to_skip.begin(), to_skip.end());
  res.skipped_fraction = static_cast<double>(to_skip.size()) /
                         (static_cast<double>(cfg.layers) * cfg.heads);
  if (to_skip.empty()) {
    res.latents = res.baseline;
    res.psnr = psnr_from_mse(0.0, max_abs(res.baseline));
    return res;
  }

  std::map<int, std::set<int>> by_layer;
  for (const auto& [l, h] : to_skip) by_layer[l].insert(h);
  DenoiseOptions opts;
  for (const auto& [l, hs] : by_layer) {
    AttentionIntervention iv;
    iv.skip_heads = hs;
    opts.plan.set(l, InterventionPlan::kAny, InterventionPlan::kAny, iv);
  }
  res.latents = denoise(model, noise, text, schedule, opts).latents;
  res.mse = mse(res.latents, res.baseline);
  res.psnr = psnr_from_mse(res.mse, max_abs(res.baseline));
  return res;
}

}  // namespace vdtlab
