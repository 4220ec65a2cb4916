#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdtlab/mat.hpp"

namespace vdtlab {

struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major
};

// Grayscale heatmap of the block-averaged map with log(1 + 1000*x) intensity
// normalized to the brightest block. Trailing rows/cols that do not fill a
// block are dropped. Deterministic for identical inputs.
ImageU8 render_heatmap(const MatF& map, int downsample);
ImageU8 render_heatmap(const MatD& map, int downsample);

// One-row heat strip for curve summaries: each value becomes a column block
// col_width pixels wide, normalized to the largest value.
ImageU8 heat_strip(const std::vector<double>& values, int height = 24, int col_width = 4);

// Binary PPM (P6); bit-exact for identical inputs.
void write_ppm(const std::string& path, const ImageU8& image);

}  // namespace vdtlab
