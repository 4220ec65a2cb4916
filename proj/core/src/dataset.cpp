#include "vdtlab/dataset.hpp"

#include "vdtlab/errors.hpp"
#include "vdtlab/rng.hpp"
#include "vdtlab/token_layout.hpp"

namespace vdtlab {

namespace {

int wrap(int v, int m) {
  int r = v % m;
  return r < 0 ? r + m : r;
}

}  // namespace

SynthDataset::SynthDataset(std::uint64_t seed, std::size_t count,
                           const ModelConfig& cfg)
    : seed_(seed), count_(count), cfg_(cfg) {
  cfg_.validate();
  if (count < 1) throw ContractError("SynthDataset: count must be >= 1");
  if (cfg.height < 2 || cfg.width < 2)
    throw ConfigError("SynthDataset: grid must be at least 2x2 to hold the square");
}

SynthSample SynthDataset::sample(std::size_t index) const {
  if (index >= count_) throw BoundsError("SynthDataset: sample index out of range");
  Rng rng(mix_seed(seed_, 0x5351554152453031ULL + index));

  SynthSample s;
  do {
    s.vx = static_cast<int>(rng.uniform_int(-2, 2));
    s.vy = static_cast<int>(rng.uniform_int(-2, 2));
  } while (s.vx == 0 && s.vy == 0);
  s.x0 = static_cast<int>(rng.uniform_int(0, cfg_.width - 1));
  s.y0 = static_cast<int>(rng.uniform_int(0, cfg_.height - 1));

  const TokenLayout layout = cfg_.video_layout();
  s.latents = MatD(layout.vision_tokens(), cfg_.latent_dim);
  s.latents.fill(0.0);
  for (int f = 0; f < cfg_.frames; ++f) {
    auto [oy, ox] = square_origin(s, f, cfg_);
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const int row = f * layout.frame_size() +
                        wrap(oy + dy, cfg_.height) * cfg_.width + wrap(ox + dx, cfg_.width);
        for (int c = 0; c < cfg_.latent_dim; ++c) s.latents(row, c) = 1.0;
      }
    }
  }

  // Embedding derived only from the clip metadata, so equal motions share it.
  std::uint64_t meta = fnv1a64(&s.vx, sizeof s.vx, seed_);
  meta = fnv1a64(&s.vy, sizeof s.vy, meta);
  meta = fnv1a64(&s.x0, sizeof s.x0, meta);
  meta = fnv1a64(&s.y0, sizeof s.y0, meta);
  Rng text_rng(mix_seed(meta, 0x54455854454D4231ULL));
  int w = cfg_.model_width();
  s.text = MatD(cfg_.text_tokens, w);
  for (std::size_t i = 0; i < s.text.size(); ++i)
    s.text.data()[i] = 0.25 * text_rng.gaussian();
  if (cfg_.text_tokens > 0 && w >= 4) {
    s.text(0, 0) = s.vx / 2.0;
    s.text(0, 1) = s.vy / 2.0;
    s.text(0, 2) = (2.0 * s.x0 + 1.0) / cfg_.width - 1.0;
    s.text(0, 3) = (2.0 * s.y0 + 1.0) / cfg_.height - 1.0;
  }
  return s;
}

std::pair<int, int> SynthDataset::square_origin(const SynthSample& s, int frame,
                                                const ModelConfig& cfg) {
  return {wrap(s.y0 + frame * s.vy, cfg.height), wrap(s.x0 + frame * s.vx, cfg.width)};
}

}  // namespace vdtlab
