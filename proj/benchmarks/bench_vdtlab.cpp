// Microbenchmarks for the attention kernel, quantile selection, and the small
// denoiser loop. Sizes bracket the default toy sequence length.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "vdtlab/attention.hpp"
#include "vdtlab/model.hpp"
#include "vdtlab/rng.hpp"
#include "vdtlab/schedule.hpp"
#include "vdtlab/sparsity_lab.hpp"
#include "vdtlab/train.hpp"

using namespace vdtlab;

namespace {

MatD random_mat(Rng& rng, int rows, int cols) {
  MatD m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.gaussian();
  return m;
}

void BM_attend(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = 16;
  Rng rng(1);
  const MatD Q = random_mat(rng, n, d);
  const MatD K = random_mat(rng, n, d);
  const MatD V = random_mat(rng, n, d);
  AttentionConfig cfg;
  cfg.head_dim = d;
  for (auto _ : state) {
    const Attended out = attend(Q, K, V, cfg);
    benchmark::DoNotOptimize(out.output.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n);
}

void BM_attend_masked(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = 16;
  Rng rng(2);
  const MatD Q = random_mat(rng, n, d);
  const MatD K = random_mat(rng, n, d);
  const MatD V = random_mat(rng, n, d);
  AttentionConfig cfg;
  cfg.head_dim = d;
  AttentionIntervention iv;
  iv.mask_threshold = 1.0 / n;  // zeroes roughly the below-uniform entries
  for (auto _ : state) {
    const Attended out = attend(Q, K, V, cfg, iv);
    benchmark::DoNotOptimize(out.output.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n);
}

void BM_quantile_threshold(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(3);
  std::vector<double> weights(static_cast<std::size_t>(n) * n);
  for (double& w : weights) w = rng.uniform();
  for (auto _ : state) {
    benchmark::DoNotOptimize(quantile_threshold(weights, 0.3));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(weights.size()));
}

ModelConfig bench_config() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.head_dim = 8;
  cfg.frames = 2;
  cfg.height = 4;
  cfg.width = 4;
  cfg.text_tokens = 2;
  cfg.latent_dim = 2;
  cfg.default_steps = 4;
  return cfg;
}

void BM_denoise_small(benchmark::State& state) {
  const ModelConfig cfg = bench_config();
  const Model model = Model::build(cfg);
  const MatD noise = make_noise(2, cfg);
  const MatD text = make_prompt_embedding(1, cfg);
  const DenoiseSchedule schedule = DenoiseSchedule::linear(cfg.default_steps);
  for (auto _ : state) {
    const DenoiseResult out = denoise(model, noise, text, schedule);
    benchmark::DoNotOptimize(out.latents.data());
  }
}

void BM_training_step(benchmark::State& state) {
  const ModelConfig cfg = bench_config();
  const Model model = Model::build(cfg);
  Rng rng(4);
  const MatD clean = random_mat(rng, cfg.frames * cfg.height * cfg.width, cfg.latent_dim);
  const MatD text = random_mat(rng, cfg.text_tokens, cfg.model_width());
  const MatD eps = random_mat(rng, clean.rows(), clean.cols());
  std::vector<double> grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(training_loss(model, clean, text, eps, 0.7, &grad));
  }
}

}  // namespace

BENCHMARK(BM_attend)->Arg(64)->Arg(260)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_attend_masked)->Arg(64)->Arg(260)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_quantile_threshold)->Arg(64)->Arg(260)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_denoise_small)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_training_step)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
