#pragma once

// Internal helpers mapping the flat parameter vector onto named views in
// tensor registry order. Shared by the inference and training paths; not
// installed.

#include <cstddef>
#include <vector>

#include "vdtlab/model.hpp"

namespace vdtlab::detail {

template <typename Ptr>
struct ViewT {
  Ptr p = nullptr;
  int rows = 0;
  int cols = 0;
  double at(int i, int j) const { return p[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i) const { return p[i]; }
};

using View = ViewT<const double*>;
using MutView = ViewT<double*>;

template <typename Ptr>
struct BlockViewsT {
  ViewT<Ptr> ln1_g, ln1_b;
  ViewT<Ptr> qkv_w, qkv_b;
  ViewT<Ptr> out_w, out_b;
  ViewT<Ptr> ln2_g, ln2_b;
  ViewT<Ptr> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <typename Ptr>
struct NetViewsT {
  ViewT<Ptr> in_w, in_b;
  ViewT<Ptr> temb_w1, temb_b1, temb_w2, temb_b2;
  ViewT<Ptr> cond_w, cond_b;  // additive arch only; empty otherwise
  std::vector<BlockViewsT<Ptr>> blocks;
  ViewT<Ptr> fin_g, fin_b;
  ViewT<Ptr> head_w, head_b;
};

using NetViews = NetViewsT<const double*>;
using MutNetViews = NetViewsT<double*>;

template <typename Ptr>
NetViewsT<Ptr> net_views(const ModelConfig& cfg, const std::vector<Tensor>& tensors,
                         Ptr base) {
  NetViewsT<Ptr> v;
  std::size_t i = 0;
  auto take = [&](ViewT<Ptr>& dst) {
    const Tensor& t = tensors[i++];
    dst = {base + t.offset, t.rows, t.cols};
  };
  take(v.in_w);
  take(v.in_b);
  take(v.temb_w1);
  take(v.temb_b1);
  take(v.temb_w2);
  take(v.temb_b2);
  if (cfg.arch == Arch::kAdditive) {
    take(v.cond_w);
    take(v.cond_b);
  }
  v.blocks.resize(cfg.layers);
  for (auto& b : v.blocks) {
    take(b.ln1_g);
    take(b.ln1_b);
    take(b.qkv_w);
    take(b.qkv_b);
    take(b.out_w);
    take(b.out_b);
    take(b.ln2_g);
    take(b.ln2_b);
    take(b.mlp_w1);
    take(b.mlp_b1);
    take(b.mlp_w2);
    take(b.mlp_b2);
  }
  take(v.fin_g);
  take(v.fin_b);
  take(v.head_w);
  take(v.head_b);
  return v;
}

inline constexpr double kLnEps = 1e-5;
inline constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

// y = x W + b with W stored (in x out); products accumulate in declaration order.
template <typename Ptr>
MatD linear(const MatD& x, const ViewT<Ptr>& w, const ViewT<Ptr>& b) {
  MatD y(x.rows(), w.cols);
  for (int i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    auto yi = y.row(i);
    for (int o = 0; o < w.cols; ++o) {
      double acc = b.p[o];
      for (int c = 0; c < w.rows; ++c) acc += xi[c] * w.at(c, o);
      yi[o] = acc;
    }
  }
  return y;
}

template <typename Ptr>
MatD layer_norm(const MatD& x, const ViewT<Ptr>& gamma, const ViewT<Ptr>& beta,
                std::vector<double>* mean_out = nullptr,
                std::vector<double>* rstd_out = nullptr) {
  const int n = x.rows();
  const int w = x.cols();
  MatD y(n, w);
  if (mean_out) mean_out->resize(n);
  if (rstd_out) rstd_out->resize(n);
  for (int i = 0; i < n; ++i) {
    auto xi = x.row(i);
    auto yi = y.row(i);
    double mean = 0.0;
    for (int c = 0; c < w; ++c) mean += xi[c];
    mean /= w;
    double var = 0.0;
    for (int c = 0; c < w; ++c) {
      const double d = xi[c] - mean;
      var += d * d;
    }
    var /= w;
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    for (int c = 0; c < w; ++c) yi[c] = (xi[c] - mean) * rstd * gamma.p[c] + beta.p[c];
    if (mean_out) (*mean_out)[i] = mean;
    if (rstd_out) (*rstd_out)[i] = rstd;
  }
  return y;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// Sinusoidal embedding of the noise level, dimension w.
inline std::vector<double> sigma_embedding(double sigma, int w) {
  std::vector<double> pe(w);
  const double t = 1000.0 * sigma;
  const int half = w / 2;
  for (int idx = 0; idx < w; ++idx) {
    const int k = idx / 2;
    const double f = std::exp(-std::log(10000.0) * static_cast<double>(k) /
                              static_cast<double>(half > 0 ? half : 1));
    pe[idx] = (idx % 2 == 0) ? std::sin(t * f) : std::cos(t * f);
  }
  return pe;
}

}  // namespace vdtlab::detail
