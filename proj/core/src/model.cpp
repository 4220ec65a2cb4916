#include "vdtlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "net_layout.hpp"
#include "vdtlab/errors.hpp"
#include "vdtlab/rng.hpp"

namespace vdtlab {

using detail::View;

TokenLayout ModelConfig::video_layout() const {
  return {frames, height, width, text_tokens, text_position};
}

TokenLayout ModelConfig::attention_layout() const {
  TokenLayout l = video_layout();
  if (arch == Arch::kAdditive) l.text_tokens = 0;
  return l;
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model requires at least one transformer block");
  if (heads < 1 || head_dim < 1) throw ConfigError("model requires positive heads and head_dim");
  if (latent_dim < 1) throw ConfigError("model requires a positive latent_dim");
  if (mlp_hidden < 0) throw ConfigError("mlp_hidden must be nonnegative");
  if (default_steps < 0) throw ConfigError("default_steps must be nonnegative");
  video_layout().validate();
}

namespace {

void push(std::vector<Tensor>& ts, std::size_t& offset, std::string name,
          TensorKind kind, int rows, int cols, int block) {
  Tensor t;
  t.name = std::move(name);
  t.kind = kind;
  t.rows = rows;
  t.cols = cols;
  t.offset = offset;
  t.block = block;
  offset += t.size();
  ts.push_back(std::move(t));
}

}  // namespace

std::vector<Tensor> tensor_registry(const ModelConfig& cfg) {
  cfg.validate();
  const int w = cfg.model_width();
  const int hidden = cfg.mlp_width();
  std::vector<Tensor> ts;
  std::size_t off = 0;
  push(ts, off, "in_proj.w", TensorKind::kWeight, cfg.latent_dim, w, -1);
  push(ts, off, "in_proj.b", TensorKind::kBias, w, 1, -1);
  push(ts, off, "temb.w1", TensorKind::kWeight, w, w, -1);
  push(ts, off, "temb.b1", TensorKind::kBias, w, 1, -1);
  push(ts, off, "temb.w2", TensorKind::kWeight, w, w, -1);
  push(ts, off, "temb.b2", TensorKind::kBias, w, 1, -1);
  if (cfg.arch == Arch::kAdditive) {
    push(ts, off, "cond.w", TensorKind::kWeight, w, w, -1);
    push(ts, off, "cond.b", TensorKind::kBias, w, 1, -1);
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    push(ts, off, p + "ln1.g", TensorKind::kLnGamma, w, 1, l);
    push(ts, off, p + "ln1.b", TensorKind::kLnBeta, w, 1, l);
    push(ts, off, p + "qkv.w", TensorKind::kWeight, w, 3 * w, l);
    push(ts, off, p + "qkv.b", TensorKind::kBias, 3 * w, 1, l);
    push(ts, off, p + "out.w", TensorKind::kWeight, w, w, l);
    push(ts, off, p + "out.b", TensorKind::kBias, w, 1, l);
    push(ts, off, p + "ln2.g", TensorKind::kLnGamma, w, 1, l);
    push(ts, off, p + "ln2.b", TensorKind::kLnBeta, w, 1, l);
    push(ts, off, p + "mlp.w1", TensorKind::kWeight, w, hidden, l);
    push(ts, off, p + "mlp.b1", TensorKind::kBias, hidden, 1, l);
    push(ts, off, p + "mlp.w2", TensorKind::kWeight, hidden, w, l);
    push(ts, off, p + "mlp.b2", TensorKind::kBias, w, 1, l);
  }
  push(ts, off, "final_ln.g", TensorKind::kLnGamma, w, 1, -1);
  push(ts, off, "final_ln.b", TensorKind::kLnBeta, w, 1, -1);
  push(ts, off, "out_proj.w", TensorKind::kWeight, w, cfg.latent_dim, -1);
  push(ts, off, "out_proj.b", TensorKind::kBias, cfg.latent_dim, 1, -1);
  return ts;
}

std::size_t param_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const Tensor& t : tensor_registry(cfg)) n += t.size();
  return n;
}

namespace {

// Scaled-Gaussian weights, zero biases, unit LayerNorm gains; every value is
// quantized to f32 precision so checkpoints round-trip bitwise.
void init_tensor(const Tensor& t, std::vector<double>& params, Rng& rng) {
  double* p = params.data() + t.offset;
  switch (t.kind) {
    case TensorKind::kWeight: {
      const double scale = 1.0 / std::sqrt(static_cast<double>(t.rows));
      for (std::size_t k = 0; k < t.size(); ++k)
        p[k] = static_cast<double>(static_cast<float>(rng.gaussian() * scale));
      break;
    }
    case TensorKind::kBias:
    case TensorKind::kLnBeta:
      for (std::size_t k = 0; k < t.size(); ++k) p[k] = 0.0;
      break;
    case TensorKind::kLnGamma:
      for (std::size_t k = 0; k < t.size(); ++k) p[k] = 1.0;
      break;
  }
}

}  // namespace

Model Model::build(const ModelConfig& config) {
  Model m;
  m.cfg_ = config;
  m.tensors_ = tensor_registry(config);
  std::size_t total = 0;
  for (const Tensor& t : m.tensors_) total += t.size();
  m.params_.assign(total, 0.0);
  Rng rng(config.param_seed);
  for (const Tensor& t : m.tensors_) init_tensor(t, m.params_, rng);
  return m;
}

Model Model::from_params(const ModelConfig& config, std::vector<double> params) {
  Model m;
  m.cfg_ = config;
  m.tensors_ = tensor_registry(config);
  std::size_t total = 0;
  for (const Tensor& t : m.tensors_) total += t.size();
  if (params.size() != total)
    throw ConfigError("parameter vector has " + std::to_string(params.size()) +
                      " values but the config needs " + std::to_string(total));
  m.params_ = std::move(params);
  return m;
}

const Tensor& Model::tensor(const std::string& name) const {
  for (const Tensor& t : tensors_)
    if (t.name == name) return t;
  throw ConfigError("no tensor named " + name);
}

Model reinit_layers(const Model& model, const std::set<int>& layers, std::uint64_t seed) {
  for (int l : layers)
    if (l < 0 || l >= model.config().layers)
      throw ConfigError("reinit layer index " + std::to_string(l) + " out of range");
  Model m = model;
  Rng rng(seed);
  for (const Tensor& t : m.tensors())
    if (t.block >= 0 && layers.count(t.block)) init_tensor(t, m.params(), rng);
  return m;
}

void InterventionPlan::set(int layer, int step, int head, AttentionIntervention iv) {
  if (layer < kAny || step < kAny || head < kAny)
    throw ConfigError("intervention plan indices must be kAny or nonnegative");
  entries_[Key{layer, step, head}] = std::move(iv);
}

AttentionIntervention InterventionPlan::resolve(int layer, int step, int head) const {
  struct Match {
    int rank;
    const AttentionIntervention* iv;
  };
  std::vector<Match> matches;
  for (const auto& [key, iv] : entries_) {
    if (key.layer != kAny && key.layer != layer) continue;
    if (key.step != kAny && key.step != step) continue;
    if (key.head != kAny && key.head != head) continue;
    const int ls = key.layer != kAny ? 1 : 0;
    const int ss = key.step != kAny ? 1 : 0;
    const int hs = key.head != kAny ? 1 : 0;
    matches.push_back({((ls + ss + hs) << 3) | (ls << 2) | (ss << 1) | hs, &iv});
  }
  std::stable_sort(matches.begin(), matches.end(),
                   [](const Match& a, const Match& b) { return a.rank < b.rank; });
  AttentionIntervention out;
  for (const Match& m : matches) {
    if (m.iv->temperature) out.temperature = m.iv->temperature;
    if (m.iv->mask_threshold) out.mask_threshold = m.iv->mask_threshold;
    if (m.iv->map_override) out.map_override = m.iv->map_override;
    out.skip_heads.insert(m.iv->skip_heads.begin(), m.iv->skip_heads.end());
    out.renormalize = out.renormalize && m.iv->renormalize;
    out.strict_degenerate_rows = out.strict_degenerate_rows || m.iv->strict_degenerate_rows;
  }
  return out;
}

void InterventionPlan::validate(const ModelConfig& cfg, int steps) const {
  for (const auto& [key, iv] : entries_) {
    if (key.layer != kAny && (key.layer < 0 || key.layer >= cfg.layers))
      throw ConfigError("intervention references layer " + std::to_string(key.layer) +
                        " of a " + std::to_string(cfg.layers) + "-layer model");
    if (key.head != kAny && (key.head < 0 || key.head >= cfg.heads))
      throw ConfigError("intervention references head " + std::to_string(key.head));
    if (key.step != kAny && (key.step < 0 || key.step >= steps))
      throw ConfigError("intervention references step " + std::to_string(key.step));
    for (int h : iv.skip_heads)
      if (h < 0 || h >= cfg.heads)
        throw ConfigError("skip set references head " + std::to_string(h));
    if (iv.temperature && !(*iv.temperature > 0.0))
      throw ConfigError("intervention temperature must be positive");
    if (iv.mask_threshold && (!(*iv.mask_threshold >= 0.0) || *iv.mask_threshold > 1.0))
      throw ConfigError("intervention mask threshold must lie in [0, 1]");
  }
}

std::string InterventionPlan::summary() const {
  if (entries_.empty()) return "none";
  bool temp = false, mask = false, skip = false, override_ = false;
  for (const auto& [key, iv] : entries_) {
    temp = temp || iv.temperature.has_value();
    mask = mask || iv.mask_threshold.has_value();
    skip = skip || !iv.skip_heads.empty();
    override_ = override_ || iv.map_override != nullptr;
  }
  std::string kinds;
  for (const char* k : {temp ? "temperature" : nullptr, mask ? "mask" : nullptr,
                        skip ? "skip" : nullptr, override_ ? "override" : nullptr}) {
    if (!k) continue;
    if (!kinds.empty()) kinds += "+";
    kinds += k;
  }
  if (kinds.empty()) kinds = "neutral";
  return std::to_string(entries_.size()) + " entries (" + kinds + ")";
}

CaptureFilter CaptureFilter::all() {
  CaptureFilter f;
  f.enabled = true;
  return f;
}

bool CaptureFilter::matches(int layer, int head, int step) const {
  if (!enabled) return false;
  if (layers && !layers->count(layer)) return false;
  if (heads && !heads->count(head)) return false;
  if (steps && !steps->count(step)) return false;
  return true;
}

std::size_t CaptureFilter::count(const ModelConfig& cfg, int total_steps) const {
  if (!enabled) return 0;
  const std::size_t nl = layers ? layers->size() : cfg.layers;
  const std::size_t nh = heads ? heads->size() : cfg.heads;
  const std::size_t ns = steps ? steps->size() : total_steps;
  return nl * nh * ns;
}

void CaptureFilter::validate(const ModelConfig& cfg, int total_steps) const {
  if (!enabled) return;
  if (layers)
    for (int l : *layers)
      if (l < 0 || l >= cfg.layers) throw ConfigError("capture filter layer out of range");
  if (heads)
    for (int h : *heads)
      if (h < 0 || h >= cfg.heads) throw ConfigError("capture filter head out of range");
  if (steps)
    for (int s : *steps)
      if (s < 0 || s >= total_steps) throw ConfigError("capture filter step out of range");
  if ((layers && layers->empty()) || (heads && heads->empty()) || (steps && steps->empty()))
    throw ConfigError("capture filter selects nothing");
}

MatD eps_forward(const Model& model, const MatD& latents, const MatD& text,
                 double sigma, int step, const DenoiseOptions& options,
                 std::vector<AttentionRecord>* captures) {
  const ModelConfig& cfg = model.config();
  const int w = cfg.model_width();
  const int vis = cfg.video_layout().vision_tokens();
  if (latents.rows() != vis || latents.cols() != cfg.latent_dim)
    throw ShapeError("latent shape does not match the model layout");
  if (text.rows() != cfg.text_tokens || (cfg.text_tokens > 0 && text.cols() != w))
    throw ShapeError("text embedding shape does not match the model");
  if (!std::isfinite(sigma)) throw NumericError("sigma is non-finite");

  const auto nv = detail::net_views(cfg, model.tensors(), model.params().data());
  const TokenLayout att = cfg.attention_layout();
  const int n = att.total_tokens();
  const int voff = att.vision_offset();

  // Time embedding through its two-layer MLP.
  const std::vector<double> pe = detail::sigma_embedding(sigma, w);
  std::vector<double> t1(w), temb(w);
  for (int o = 0; o < w; ++o) {
    double acc = nv.temb_b1.p[o];
    for (int c = 0; c < w; ++c) acc += pe[c] * nv.temb_w1.at(c, o);
    t1[o] = detail::gelu(acc);
  }
  for (int o = 0; o < w; ++o) {
    double acc = nv.temb_b2.p[o];
    for (int c = 0; c < w; ++c) acc += t1[c] * nv.temb_w2.at(c, o);
    temb[o] = acc;
  }

  std::vector<double> cond(w, 0.0);
  if (cfg.arch == Arch::kAdditive) {
    std::vector<double> mean_text(w, 0.0);
    if (cfg.text_tokens > 0) {
      for (int t = 0; t < cfg.text_tokens; ++t)
        for (int c = 0; c < w; ++c) mean_text[c] += text(t, c);
      for (int c = 0; c < w; ++c) mean_text[c] /= cfg.text_tokens;
    }
    for (int o = 0; o < w; ++o) {
      double acc = nv.cond_b.p[o];
      for (int c = 0; c < w; ++c) acc += mean_text[c] * nv.cond_w.at(c, o);
      cond[o] = acc;
    }
  }

  MatD h(n, w);
  for (int v = 0; v < vis; ++v) {
    auto xi = latents.row(v);
    auto hi = h.row(voff + v);
    for (int o = 0; o < w; ++o) {
      double acc = nv.in_b.p[o];
      for (int c = 0; c < cfg.latent_dim; ++c) acc += xi[c] * nv.in_w.at(c, o);
      hi[o] = acc;
    }
  }
  if (cfg.arch == Arch::kJoint) {
    for (int t = 0; t < cfg.text_tokens; ++t) {
      auto hi = h.row(att.text_offset() + t);
      for (int c = 0; c < w; ++c) hi[c] = text(t, c);
    }
  }
  for (int i = 0; i < n; ++i) {
    auto hi = h.row(i);
    for (int c = 0; c < w; ++c) hi[c] += temb[c];
    if (cfg.arch == Arch::kAdditive)
      for (int c = 0; c < w; ++c) hi[c] += cond[c];
  }

  const AttentionConfig acfg{cfg.heads, cfg.head_dim, 1.0};
  const int dk = cfg.head_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& bv = nv.blocks[l];
    const MatD a = detail::layer_norm(h, bv.ln1_g, bv.ln1_b);
    const MatD qkv = detail::linear(a, bv.qkv_w, bv.qkv_b);
    MatD concat(n, w);
    for (int hd = 0; hd < cfg.heads; ++hd) {
      MatD Qh(n, dk), Kh(n, dk), Vh(n, dk);
      for (int i = 0; i < n; ++i) {
        auto qi = qkv.row(i);
        for (int c = 0; c < dk; ++c) {
          Qh(i, c) = qi[hd * dk + c];
          Kh(i, c) = qi[w + hd * dk + c];
          Vh(i, c) = qi[2 * w + hd * dk + c];
        }
      }
      const AttendTags tags{l, hd, step};
      const AttentionIntervention iv =
          options.plan.empty() ? AttentionIntervention{} : options.plan.resolve(l, step, hd);
      if (options.probes.value_probe) options.probes.value_probe(tags, Vh);
      Attended att = attend(Qh, Kh, Vh, acfg, iv, tags, options.probes.map_probe);
      if (options.probes.mask_probe && att.stats.total_entries > 0)
        options.probes.mask_probe(tags, att.stats);
      for (int i = 0; i < n; ++i) {
        auto oi = att.output.row(i);
        auto ci = concat.row(i);
        for (int c = 0; c < dk; ++c) ci[hd * dk + c] = oi[c];
      }
      if (captures && !att.record.skipped && options.capture.matches(l, hd, step))
        captures->push_back(std::move(att.record));
    }
    const MatD attn = detail::linear(concat, bv.out_w, bv.out_b);
    for (std::size_t k = 0; k < h.size(); ++k) h.data()[k] += attn.data()[k];
    const MatD m = detail::layer_norm(h, bv.ln2_g, bv.ln2_b);
    MatD u = detail::linear(m, bv.mlp_w1, bv.mlp_b1);
    for (std::size_t k = 0; k < u.size(); ++k) u.data()[k] = detail::gelu(u.data()[k]);
    const MatD mo = detail::linear(u, bv.mlp_w2, bv.mlp_b2);
    for (std::size_t k = 0; k < h.size(); ++k) h.data()[k] += mo.data()[k];
  }

  const MatD f = detail::layer_norm(h, nv.fin_g, nv.fin_b);
  MatD eps(vis, cfg.latent_dim);
  for (int v = 0; v < vis; ++v) {
    auto fi = f.row(voff + v);
    auto ei = eps.row(v);
    for (int o = 0; o < cfg.latent_dim; ++o) {
      double acc = nv.head_b.p[o];
      for (int c = 0; c < w; ++c) acc += fi[c] * nv.head_w.at(c, o);
      ei[o] = acc;
    }
  }
  return eps;
}

DenoiseResult denoise(const Model& model, const MatD& initial_noise, const MatD& text,
                      const DenoiseSchedule& schedule, const DenoiseOptions& options) {
  schedule.validate();
  const ModelConfig& cfg = model.config();
  options.plan.validate(cfg, schedule.steps());
  options.capture.validate(cfg, schedule.steps());

  DenoiseResult result;
  std::vector<AttentionRecord>* captures = nullptr;
  if (options.capture.enabled) {
    const std::size_t n = cfg.sequence_length();
    const std::size_t records = options.capture.count(cfg, schedule.steps());
    const std::size_t bytes = records * n * n * sizeof(float);
    if (bytes > options.capture_budget_bytes)
      throw ResourceError("attention capture needs " + std::to_string(bytes) +
                          " bytes but the budget is " +
                          std::to_string(options.capture_budget_bytes));
    result.captures.reserve(records);
    captures = &result.captures;
  }

  MatD x = initial_noise;
  for (int i = 0; i < schedule.steps(); ++i) {
    const MatD eps = eps_forward(model, x, text, schedule.sigmas[i], i, options, captures);
    const double ds = schedule.sigmas[i + 1] - schedule.sigmas[i];
    for (std::size_t k = 0; k < x.size(); ++k) x.data()[k] += ds * eps.data()[k];
  }
  result.latents = std::move(x);
  return result;
}

MatD make_prompt_embedding(std::uint64_t prompt_seed, const ModelConfig& cfg) {
  cfg.validate();
  MatD text(cfg.text_tokens, cfg.text_tokens > 0 ? cfg.model_width() : 0);
  Rng rng(prompt_seed);
  for (std::size_t i = 0; i < text.size(); ++i) text.data()[i] = rng.gaussian();
  return text;
}

MatD make_noise(std::uint64_t noise_seed, const ModelConfig& cfg) {
  cfg.validate();
  MatD noise(cfg.video_layout().vision_tokens(), cfg.latent_dim);
  Rng rng(noise_seed);
  for (std::size_t i = 0; i < noise.size(); ++i) noise.data()[i] = rng.gaussian();
  return noise;
}

MatD first_token_only(const MatD& text) {
  if (text.rows() < 1)
    throw NotApplicableError("first-token ablation requires at least one text token");
  MatD out = text;
  for (int t = 1; t < out.rows(); ++t) {
    auto row = out.row(t);
    for (int c = 0; c < out.cols(); ++c) row[c] = 0.0;
  }
  return out;
}

}  // namespace vdtlab
