#pragma once

#include <cstddef>
#include <cstdint>

#include "vdtlab/mat.hpp"
#include "vdtlab/model.hpp"

namespace vdtlab {

// One synthetic clip: a bright 2x2 square translating with constant integer
// velocity over a dark background, rendered directly as vision-row latents,
// plus a text embedding that deterministically encodes (velocity, start).
struct SynthSample {
  MatD latents;  // (frames*height*width) x latent_dim, flatten_index order
  MatD text;     // text_tokens x model_width
  int vx = 0;
  int vy = 0;
  int x0 = 0;
  int y0 = 0;
};

class SynthDataset {
 public:
  SynthDataset(std::uint64_t seed, std::size_t count, const ModelConfig& cfg);

  std::size_t size() const { return count_; }
  const ModelConfig& config() const { return cfg_; }
  SynthSample sample(std::size_t index) const;

  // Top-left corner of the square at a given frame, after wrap-around.
  static std::pair<int, int> square_origin(const SynthSample& s, int frame,
                                           const ModelConfig& cfg);

 private:
  std::uint64_t seed_;
  std::size_t count_;
  ModelConfig cfg_;
};

}  // namespace vdtlab
