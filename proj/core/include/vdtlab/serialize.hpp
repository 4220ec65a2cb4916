#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdtlab/mat.hpp"
#include "vdtlab/model.hpp"
#include "vdtlab/token_layout.hpp"

namespace vdtlab {

// Checkpoint file (magic TVDT): header with the full config, then the
// parameter count and the contiguous little-endian f32 parameter block in
// tensor declaration order. Write -> read -> write is byte-identical.
// Parameters that are not f32-representable (mid-training values) lose
// precision on save; freshly built or loaded models round-trip bitwise.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

// Latent file (magic TVLT): video dimensions plus row-major little-endian
// f64 values, so saved latents compare bitwise against in-memory runs.
struct LoadedLatents {
  MatD data;  // (frames * height * width) x latent_dim
  int frames = 0;
  int height = 0;
  int width = 0;
  int latent_dim = 0;
};
void save_latents(const std::string& path, const MatD& latents, int frames, int height,
                  int width, int latent_dim);
LoadedLatents load_latents(const std::string& path);

// Full set of captured maps for one run, complete for its filter bitmap.
// Bit index = ((step * layers) + layer) * heads + head, LSB first. Records
// are stored in (step, layer, head) ascending order.
struct AttentionTrace {
  TokenLayout layout;  // the layout attention maps see
  int layers = 0;
  int heads = 0;
  int steps = 0;
  std::vector<std::uint8_t> filter_bitmap;
  std::string manifest_json;
  std::vector<AttentionRecord> records;

  std::size_t bit_index(int layer, int head, int step) const;
  bool has_record(int layer, int head, int step) const;
  const AttentionRecord* find(int layer, int head, int step) const;
  std::set<int> traced_layers() const;
  // ContractError when records disagree with the bitmap or layout.
  void validate() const;
};

// Trace file (magic ATRC): header, filter bitmap, length-prefixed manifest
// JSON, then each record as a row-major little-endian f32 n x n block.
// Bit-exact round-trip.
void save_trace(const std::string& path, const AttentionTrace& trace);
AttentionTrace load_trace(const std::string& path);

}  // namespace vdtlab
