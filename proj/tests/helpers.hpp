#pragma once

#include <vdtlab/mat.hpp>
#include <vdtlab/model.hpp>
#include <vdtlab/rng.hpp>

namespace vdtlab::testing {

inline MatD random_mat(Rng& rng, int rows, int cols, double scale = 1.0) {
  MatD m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.gaussian();
  return m;
}

// Row-stochastic matrix with strictly positive entries.
inline MatF random_stochastic(Rng& rng, int n) {
  MatF m(n, n);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    std::vector<double> row(n);
    for (int j = 0; j < n; ++j) {
      row[j] = rng.uniform() + 1e-3;
      sum += row[j];
    }
    for (int j = 0; j < n; ++j) m(i, j) = static_cast<float>(row[j] / sum);
  }
  return m;
}

// Small config for fast end-to-end runs: n = 20 joint tokens, width 8.
inline ModelConfig small_config() {
  ModelConfig cfg;
  cfg.arch = Arch::kJoint;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.head_dim = 4;
  cfg.frames = 2;
  cfg.height = 3;
  cfg.width = 3;
  cfg.text_tokens = 2;
  cfg.latent_dim = 2;
  cfg.mlp_hidden = 16;
  cfg.default_steps = 4;
  cfg.param_seed = 7;
  return cfg;
}

// Miniature instance for gradient checks and short trainings: n = 10 joint
// tokens on a grid just big enough for the synthetic dataset's 2x2 square.
inline ModelConfig grad_check_config() {
  ModelConfig cfg;
  cfg.arch = Arch::kJoint;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.head_dim = 4;
  cfg.frames = 2;
  cfg.height = 2;
  cfg.width = 2;
  cfg.text_tokens = 2;
  cfg.latent_dim = 2;
  cfg.mlp_hidden = 16;
  cfg.default_steps = 4;
  cfg.param_seed = 11;
  return cfg;
}

}  // namespace vdtlab::testing
