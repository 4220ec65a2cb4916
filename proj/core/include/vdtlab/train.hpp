#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "vdtlab/dataset.hpp"
#include "vdtlab/mat.hpp"
#include "vdtlab/model.hpp"

namespace vdtlab {

struct TrainingConfig {
  std::set<int> trainable_layers;  // block indices that receive updates
  bool train_io = false;           // also train the shared/io tensors
  int total_steps = 500;
  int batch_size = 1;
  double lr = 1e-3;
  int warmup_steps = 10;
  double ema_beta = 0.99;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  // Noise levels sampled during training; empty means the linear schedule for
  // the model's default step count. Only strictly positive entries are drawn.
  std::vector<double> sigmas;
  bool record_param_snapshots = false;

  void validate(const ModelConfig& model_config) const;
};

struct TrainingResult {
  Model model;
  Model ema_model;
  std::vector<double> loss_trace;  // one entry per optimizer step
  std::vector<double> lr_trace;
  std::vector<std::vector<double>> param_snapshots;  // post-step params if recorded
  std::vector<std::size_t> trainable_offsets;        // flat indices, ascending
};

// Linear ramp over the warmup window, then constant; step is 0-based.
inline double warmup_lr(double lr, int warmup_steps, int step) {
  if (warmup_steps <= 0 || step + 1 >= warmup_steps) return lr;
  return lr * (static_cast<double>(step + 1) / warmup_steps);
}

// Single shadow update, shared with tests so the recursion matches bitwise.
inline double ema_update(double beta, double shadow, double value) {
  return beta * shadow + (1.0 - beta) * value;
}

// Flat parameter indices covered by the trainable set, ascending.
std::vector<std::size_t> trainable_offsets(const Model& model, const TrainingConfig& cfg);

// Noise-prediction loss for one noised clip: mean squared error between the
// model's prediction at clean + sigma * eps and eps itself. When grad is given
// it is resized to the parameter count and filled with d loss / d params.
double training_loss(const Model& model, const MatD& clean, const MatD& text,
                     const MatD& eps, double sigma, std::vector<double>* grad = nullptr);

// Decoupled-weight-decay adaptive-moment training of the trainable subset.
// Frozen parameters stay bitwise unchanged in both returned models.
TrainingResult retrain(const Model& model, const TrainingConfig& cfg,
                       const SynthDataset& dataset);

}  // namespace vdtlab
