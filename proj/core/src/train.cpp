#include "vdtlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "net_layout.hpp"
#include "vdtlab/errors.hpp"
#include "vdtlab/rng.hpp"
#include "vdtlab/schedule.hpp"

namespace vdtlab {

namespace {

using detail::MutNetViews;
using detail::MutView;
using detail::NetViews;
using detail::View;

struct BlockCache {
  MatD h_in;
  std::vector<double> mu1, r1;
  MatD a;
  MatD qkv;
  std::vector<MatD> maps;  // per-head row softmax, kept in f64
  MatD concat;
  MatD h_mid;
  std::vector<double> mu2, r2;
  MatD m;
  MatD u_pre;
  MatD u;
};

struct ForwardCache {
  std::vector<double> pe, t1_pre, t1, temb;
  std::vector<double> mean_text;
  std::vector<BlockCache> blocks;
  MatD h_final;
  std::vector<double> mu_f, r_f;
  MatD f;
};

// Training forward: same network as eps_forward, but attention maps stay in
// f64 and every intermediate needed by the backward pass is cached.
MatD forward_cached(const NetViews& nv, const ModelConfig& cfg, const MatD& x,
                    const MatD& text, double sigma, ForwardCache& fc) {
  const int w = cfg.model_width();
  const int vis = cfg.video_layout().vision_tokens();
  const TokenLayout att = cfg.attention_layout();
  const int n = att.total_tokens();
  const int voff = att.vision_offset();
  const int dk = cfg.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  fc.pe = detail::sigma_embedding(sigma, w);
  fc.t1_pre.resize(w);
  fc.t1.resize(w);
  fc.temb.resize(w);
  for (int o = 0; o < w; ++o) {
    double acc = nv.temb_b1.p[o];
    for (int c = 0; c < w; ++c) acc += fc.pe[c] * nv.temb_w1.at(c, o);
    fc.t1_pre[o] = acc;
    fc.t1[o] = detail::gelu(acc);
  }
  for (int o = 0; o < w; ++o) {
    double acc = nv.temb_b2.p[o];
    for (int c = 0; c < w; ++c) acc += fc.t1[c] * nv.temb_w2.at(c, o);
    fc.temb[o] = acc;
  }

  std::vector<double> cond(w, 0.0);
  if (cfg.arch == Arch::kAdditive) {
    fc.mean_text.assign(w, 0.0);
    if (cfg.text_tokens > 0) {
      for (int t = 0; t < cfg.text_tokens; ++t)
        for (int c = 0; c < w; ++c) fc.mean_text[c] += text(t, c);
      for (int c = 0; c < w; ++c) fc.mean_text[c] /= cfg.text_tokens;
    }
    for (int o = 0; o < w; ++o) {
      double acc = nv.cond_b.p[o];
      for (int c = 0; c < w; ++c) acc += fc.mean_text[c] * nv.cond_w.at(c, o);
      cond[o] = acc;
    }
  }

  MatD h(n, w);
  for (int v = 0; v < vis; ++v) {
    auto xi = x.row(v);
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
    for (int c = 0; c < w; ++c) hi[c] += fc.temb[c];
    if (cfg.arch == Arch::kAdditive)
      for (int c = 0; c < w; ++c) hi[c] += cond[c];
  }

  fc.blocks.resize(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    BlockCache& bc = fc.blocks[l];
    const auto& bv = nv.blocks[l];
    bc.h_in = h;
    bc.a = detail::layer_norm(bc.h_in, bv.ln1_g, bv.ln1_b, &bc.mu1, &bc.r1);
    bc.qkv = detail::linear(bc.a, bv.qkv_w, bv.qkv_b);
    bc.maps.assign(cfg.heads, MatD());
    bc.concat = MatD(n, w);
    for (int hd = 0; hd < cfg.heads; ++hd) {
      MatD& P = bc.maps[hd];
      P = MatD(n, n);
      for (int i = 0; i < n; ++i) {
        auto qi = bc.qkv.row(i);
        auto pi = P.row(i);
        double row_max = -1e300;
        for (int j = 0; j < n; ++j) {
          auto kj = bc.qkv.row(j);
          double s = 0.0;
          for (int c = 0; c < dk; ++c) s += qi[hd * dk + c] * kj[w + hd * dk + c];
          pi[j] = s * scale;
          row_max = std::max(row_max, pi[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
          pi[j] = std::exp(pi[j] - row_max);
          denom += pi[j];
        }
        for (int j = 0; j < n; ++j) pi[j] /= denom;
      }
      for (int i = 0; i < n; ++i) {
        auto pi = P.row(i);
        auto ci = bc.concat.row(i);
        for (int c = 0; c < dk; ++c) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += pi[j] * bc.qkv(j, 2 * w + hd * dk + c);
          ci[hd * dk + c] = acc;
        }
      }
    }
    const MatD attn = detail::linear(bc.concat, bv.out_w, bv.out_b);
    bc.h_mid = bc.h_in;
    for (std::size_t k = 0; k < h.size(); ++k) bc.h_mid.data()[k] += attn.data()[k];
    bc.m = detail::layer_norm(bc.h_mid, bv.ln2_g, bv.ln2_b, &bc.mu2, &bc.r2);
    bc.u_pre = detail::linear(bc.m, bv.mlp_w1, bv.mlp_b1);
    bc.u = bc.u_pre;
    for (std::size_t k = 0; k < bc.u.size(); ++k)
      bc.u.data()[k] = detail::gelu(bc.u.data()[k]);
    const MatD mo = detail::linear(bc.u, bv.mlp_w2, bv.mlp_b2);
    h = bc.h_mid;
    for (std::size_t k = 0; k < h.size(); ++k) h.data()[k] += mo.data()[k];
  }

  fc.h_final = h;
  fc.f = detail::layer_norm(fc.h_final, nv.fin_g, nv.fin_b, &fc.mu_f, &fc.r_f);
  MatD eps(vis, cfg.latent_dim);
  for (int v = 0; v < vis; ++v) {
    auto fi = fc.f.row(voff + v);
    auto ei = eps.row(v);
    for (int o = 0; o < cfg.latent_dim; ++o) {
      double acc = nv.head_b.p[o];
      for (int c = 0; c < w; ++c) acc += fi[c] * nv.head_w.at(c, o);
      ei[o] = acc;
    }
  }
  return eps;
}

// dy through y = gamma * xhat + beta; accumulates parameter grads, returns dx.
MatD layer_norm_backward(const MatD& x, const std::vector<double>& mu,
                         const std::vector<double>& r, const View& gamma,
                         const MatD& dy, const MutView& dgamma, const MutView& dbeta) {
  const int n = x.rows();
  const int w = x.cols();
  MatD dx(n, w);
  for (int i = 0; i < n; ++i) {
    auto xi = x.row(i);
    auto dyi = dy.row(i);
    auto dxi = dx.row(i);
    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
    for (int c = 0; c < w; ++c) {
      const double xh = (xi[c] - mu[i]) * r[i];
      const double dxh = dyi[c] * gamma.p[c];
      dgamma.p[c] += dyi[c] * xh;
      dbeta.p[c] += dyi[c];
      mean_dxh += dxh;
      mean_dxh_xh += dxh * xh;
    }
    mean_dxh /= w;
    mean_dxh_xh /= w;
    for (int c = 0; c < w; ++c) {
      const double xh = (xi[c] - mu[i]) * r[i];
      const double dxh = dyi[c] * gamma.p[c];
      dxi[c] = r[i] * (dxh - mean_dxh - xh * mean_dxh_xh);
    }
  }
  return dx;
}

// dy through y = x W + b; accumulates dW and db, returns dx.
MatD linear_backward(const MatD& x, const View& w, const MatD& dy,
                     const MutView& dw, const MutView& db) {
  const int n = x.rows();
  MatD dx(n, w.rows);
  for (int i = 0; i < n; ++i) {
    auto dyi = dy.row(i);
    for (int o = 0; o < w.cols; ++o) db.p[o] += dyi[o];
    auto xi = x.row(i);
    auto dxi = dx.row(i);
    for (int c = 0; c < w.rows; ++c) {
      double* dwc = dw.p + static_cast<std::size_t>(c) * w.cols;
      const double xic = xi[c];
      double acc = 0.0;
      const double* wc = w.p + static_cast<std::size_t>(c) * w.cols;
      for (int o = 0; o < w.cols; ++o) {
        dwc[o] += xic * dyi[o];
        acc += dyi[o] * wc[o];
      }
      dxi[c] = acc;
    }
  }
  return dx;
}

void backward(const NetViews& nv, const MutNetViews& gv, const ModelConfig& cfg,
              const MatD& x, const MatD& /*text*/, const ForwardCache& fc,
              const MatD& d_eps) {
  const int w = cfg.model_width();
  const int vis = cfg.video_layout().vision_tokens();
  const TokenLayout att = cfg.attention_layout();
  const int n = att.total_tokens();
  const int voff = att.vision_offset();
  const int dk = cfg.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  MatD df(n, w);
  df.fill(0.0);
  for (int v = 0; v < vis; ++v) {
    auto dei = d_eps.row(v);
    auto fi = fc.f.row(voff + v);
    auto dfi = df.row(voff + v);
    for (int o = 0; o < cfg.latent_dim; ++o) {
      const double d = dei[o];
      gv.head_b.p[o] += d;
      for (int c = 0; c < w; ++c) {
        gv.head_w.p[static_cast<std::size_t>(c) * cfg.latent_dim + o] += fi[c] * d;
        dfi[c] += nv.head_w.at(c, o) * d;
      }
    }
  }
  MatD dh = layer_norm_backward(fc.h_final, fc.mu_f, fc.r_f, nv.fin_g, df,
                                gv.fin_g, gv.fin_b);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const BlockCache& bc = fc.blocks[l];
    const auto& bv = nv.blocks[l];
    const auto& gb = gv.blocks[l];

    MatD du = linear_backward(bc.u, bv.mlp_w2, dh, gb.mlp_w2, gb.mlp_b2);
    for (std::size_t k = 0; k < du.size(); ++k)
      du.data()[k] *= detail::gelu_grad(bc.u_pre.data()[k]);
    MatD dm = linear_backward(bc.m, bv.mlp_w1, du, gb.mlp_w1, gb.mlp_b1);
    MatD dh_mid = layer_norm_backward(bc.h_mid, bc.mu2, bc.r2, bv.ln2_g, dm,
                                      gb.ln2_g, gb.ln2_b);
    for (std::size_t k = 0; k < dh_mid.size(); ++k) dh_mid.data()[k] += dh.data()[k];

    MatD dconcat = linear_backward(bc.concat, bv.out_w, dh_mid, gb.out_w, gb.out_b);
    MatD dqkv(n, 3 * w);
    dqkv.fill(0.0);
    MatD dP(n, n);
    for (int hd = 0; hd < cfg.heads; ++hd) {
      const MatD& P = bc.maps[hd];
      const int qo = hd * dk, ko = w + hd * dk, vo = 2 * w + hd * dk;
      for (int i = 0; i < n; ++i) {
        auto dci = dconcat.row(i);
        auto dpi = dP.row(i);
        for (int j = 0; j < n; ++j) {
          auto vj = bc.qkv.row(j);
          double acc = 0.0;
          for (int c = 0; c < dk; ++c) acc += dci[qo + c] * vj[vo + c];
          dpi[j] = acc;
        }
      }
      for (int j = 0; j < n; ++j) {
        auto dvj = dqkv.row(j);
        for (int i = 0; i < n; ++i) {
          const double p = P(i, j);
          if (p == 0.0) continue;
          auto dci = dconcat.row(i);
          for (int c = 0; c < dk; ++c) dvj[vo + c] += p * dci[qo + c];
        }
      }
      for (int i = 0; i < n; ++i) {
        auto pi = P.row(i);
        auto dpi = dP.row(i);
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += dpi[j] * pi[j];
        for (int j = 0; j < n; ++j) dpi[j] = pi[j] * (dpi[j] - dot);
      }
      for (int i = 0; i < n; ++i) {
        auto dpi = dP.row(i);
        auto dqi = dqkv.row(i);
        for (int j = 0; j < n; ++j) {
          const double ds = dpi[j] * scale;
          if (ds == 0.0) continue;
          auto kj = bc.qkv.row(j);
          auto dkj = dqkv.row(j);
          auto qi = bc.qkv.row(i);
          for (int c = 0; c < dk; ++c) {
            dqi[qo + c] += ds * kj[ko + c];
            dkj[ko + c] += ds * qi[qo + c];
          }
        }
      }
    }
    MatD da = linear_backward(bc.a, bv.qkv_w, dqkv, gb.qkv_w, gb.qkv_b);
    MatD dh_in = layer_norm_backward(bc.h_in, bc.mu1, bc.r1, bv.ln1_g, da,
                                     gb.ln1_g, gb.ln1_b);
    for (std::size_t k = 0; k < dh_in.size(); ++k) dh_in.data()[k] += dh_mid.data()[k];
    dh = std::move(dh_in);
  }

  // Both broadcast additions feed every row, so they share the column sums.
  std::vector<double> dtemb(w, 0.0);
  for (int i = 0; i < n; ++i) {
    auto dhi = dh.row(i);
    for (int c = 0; c < w; ++c) dtemb[c] += dhi[c];
  }
  for (int v = 0; v < vis; ++v) {
    auto dhi = dh.row(voff + v);
    auto xi = x.row(v);
    for (int o = 0; o < w; ++o) {
      const double d = dhi[o];
      gv.in_b.p[o] += d;
      for (int c = 0; c < cfg.latent_dim; ++c)
        gv.in_w.p[static_cast<std::size_t>(c) * w + o] += xi[c] * d;
    }
  }
  if (cfg.arch == Arch::kAdditive) {
    for (int o = 0; o < w; ++o) {
      gv.cond_b.p[o] += dtemb[o];
      for (int c = 0; c < w; ++c)
        gv.cond_w.p[static_cast<std::size_t>(c) * w + o] += fc.mean_text[c] * dtemb[o];
    }
  }
  std::vector<double> dt1(w, 0.0);
  for (int o = 0; o < w; ++o) {
    gv.temb_b2.p[o] += dtemb[o];
    for (int c = 0; c < w; ++c) {
      gv.temb_w2.p[static_cast<std::size_t>(c) * w + o] += fc.t1[c] * dtemb[o];
      dt1[c] += nv.temb_w2.at(c, o) * dtemb[o];
    }
  }
  for (int o = 0; o < w; ++o) {
    const double d = dt1[o] * detail::gelu_grad(fc.t1_pre[o]);
    gv.temb_b1.p[o] += d;
    for (int c = 0; c < w; ++c)
      gv.temb_w1.p[static_cast<std::size_t>(c) * w + o] += fc.pe[c] * d;
  }
}

}  // namespace

void TrainingConfig::validate(const ModelConfig& model_config) const {
  if (trainable_layers.empty() && !train_io)
    throw ConfigError("training requires a nonempty trainable set");
  for (int l : trainable_layers)
    if (l < 0 || l >= model_config.layers)
      throw ConfigError("trainable layer " + std::to_string(l) + " out of range");
  if (total_steps < 0) throw ConfigError("total_steps must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be nonnegative");
  if (!(ema_beta >= 0.0) || ema_beta > 1.0)
    throw ConfigError("ema_beta must lie in [0, 1]");
  if (!(beta1 >= 0.0) || beta1 >= 1.0 || !(beta2 >= 0.0) || beta2 >= 1.0)
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  for (double s : sigmas)
    if (!std::isfinite(s) || s < 0.0)
      throw ConfigError("training sigmas must be finite and nonnegative");
}

std::vector<std::size_t> trainable_offsets(const Model& model, const TrainingConfig& cfg) {
  std::vector<std::size_t> offsets;
  for (const Tensor& t : model.tensors()) {
    const bool trainable =
        t.block < 0 ? cfg.train_io : cfg.trainable_layers.count(t.block) > 0;
    if (!trainable) continue;
    for (std::size_t k = 0; k < t.size(); ++k) offsets.push_back(t.offset + k);
  }
  return offsets;
}

double training_loss(const Model& model, const MatD& clean, const MatD& text,
                     const MatD& eps, double sigma, std::vector<double>* grad) {
  const ModelConfig& cfg = model.config();
  const int vis = cfg.video_layout().vision_tokens();
  if (clean.rows() != vis || clean.cols() != cfg.latent_dim)
    throw ShapeError("clean latents do not match the model layout");
  if (eps.rows() != clean.rows() || eps.cols() != clean.cols())
    throw ShapeError("noise shape does not match the latents");
  if (text.rows() != cfg.text_tokens ||
      (cfg.text_tokens > 0 && text.cols() != cfg.model_width()))
    throw ShapeError("text embedding shape does not match the model");
  if (!std::isfinite(sigma) || sigma < 0.0)
    throw NumericError("training sigma must be finite and nonnegative");

  MatD noisy = clean;
  for (std::size_t k = 0; k < noisy.size(); ++k)
    noisy.data()[k] += sigma * eps.data()[k];

  const NetViews nv = detail::net_views(cfg, model.tensors(), model.params().data());
  ForwardCache fc;
  const MatD pred = forward_cached(nv, cfg, noisy, text, sigma, fc);

  const double inv = 1.0 / static_cast<double>(pred.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred.data()[k] - eps.data()[k];
    loss += d * d;
  }
  loss *= inv;

  if (grad) {
    grad->assign(model.param_count(), 0.0);
    const MutNetViews gv = detail::net_views(cfg, model.tensors(), grad->data());
    MatD d_eps(pred.rows(), pred.cols());
    for (std::size_t k = 0; k < pred.size(); ++k)
      d_eps.data()[k] = 2.0 * inv * (pred.data()[k] - eps.data()[k]);
    backward(nv, gv, cfg, noisy, text, fc, d_eps);
  }
  return loss;
}

TrainingResult retrain(const Model& model, const TrainingConfig& cfg,
                       const SynthDataset& dataset) {
  const ModelConfig& mc = model.config();
  cfg.validate(mc);
  const ModelConfig& dc = dataset.config();
  if (dc.video_layout() != mc.video_layout() || dc.latent_dim != mc.latent_dim ||
      dc.model_width() != mc.model_width() || dc.text_tokens != mc.text_tokens)
    throw IncompatibilityError("dataset", "dataset geometry does not match the model");

  std::vector<double> source =
      cfg.sigmas.empty() ? DenoiseSchedule::linear(mc.default_steps).sigmas : cfg.sigmas;
  std::vector<double> pool;
  for (double s : source)
    if (s > 0.0) pool.push_back(s);
  if (pool.empty()) throw ConfigError("training needs at least one positive sigma");

  TrainingResult res;
  res.model = model;
  res.ema_model = model;
  res.trainable_offsets = trainable_offsets(model, cfg);
  res.loss_trace.reserve(cfg.total_steps);
  res.lr_trace.reserve(cfg.total_steps);

  const std::size_t tcount = res.trainable_offsets.size();
  std::vector<double> m1(tcount, 0.0), m2(tcount, 0.0);
  std::vector<double> grad, gacc(model.param_count(), 0.0);
  Rng rng(cfg.seed);

  for (int step = 0; step < cfg.total_steps; ++step) {
    std::fill(gacc.begin(), gacc.end(), 0.0);
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx =
          rng.uniform_int(0, static_cast<int>(dataset.size()) - 1);
      const double sigma = pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)];
      const SynthSample sample = dataset.sample(idx);
      MatD eps(sample.latents.rows(), sample.latents.cols());
      for (std::size_t k = 0; k < eps.size(); ++k) eps.data()[k] = rng.gaussian();
      loss_sum += training_loss(res.model, sample.latents, sample.text, eps, sigma, &grad);
      for (std::size_t k = 0; k < gacc.size(); ++k) gacc[k] += grad[k];
    }
    const double loss = loss_sum / cfg.batch_size;
    if (!std::isfinite(loss)) throw TrainingDivergedError(step);
    const double inv_batch = 1.0 / cfg.batch_size;
    const double lr_t = warmup_lr(cfg.lr, cfg.warmup_steps, step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, step + 1);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step + 1);
    for (std::size_t k = 0; k < tcount; ++k) {
      const std::size_t j = res.trainable_offsets[k];
      const double g = gacc[j] * inv_batch;
      m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * g;
      m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * g * g;
      const double mh = m1[k] / bc1;
      const double vh = m2[k] / bc2;
      double& p = res.model.params()[j];
      p -= lr_t * (mh / (std::sqrt(vh) + cfg.adam_eps) + cfg.weight_decay * p);
    }
    for (std::size_t k = 0; k < tcount; ++k) {
      const std::size_t j = res.trainable_offsets[k];
      double& e = res.ema_model.params()[j];
      e = ema_update(cfg.ema_beta, e, res.model.params()[j]);
    }
    res.loss_trace.push_back(loss);
    res.lr_trace.push_back(lr_t);
    if (cfg.record_param_snapshots) res.param_snapshots.push_back(res.model.params());
  }
  return res;
}

}  // namespace vdtlab
