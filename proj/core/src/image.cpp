#include "vdtlab/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vdtlab/errors.hpp"

namespace vdtlab {

namespace {

constexpr double kLogScale = 1000.0;

std::uint8_t shade(double value, double max_value) {
  if (!(value > 0.0) || !(max_value > 0.0)) return 0;
  const double v = std::log1p(kLogScale * value) / std::log1p(kLogScale * max_value);
  const int byte = static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  return static_cast<std::uint8_t>(std::clamp(byte, 0, 255));
}

template <typename T>
ImageU8 heatmap_impl(const Matrix<T>& map, int downsample) {
  if (downsample < 1) throw ConfigError("heatmap downsample must be positive");
  const int out_h = map.rows() / downsample;
  const int out_w = map.cols() / downsample;
  if (out_h < 1 || out_w < 1)
    throw ShapeError("heatmap downsample exceeds the map dimensions");
  MatD blocks(out_h, out_w, 0.0);
  const double denom = static_cast<double>(downsample) * downsample;
  for (int i = 0; i < out_h * downsample; ++i) {
    for (int j = 0; j < out_w * downsample; ++j)
      blocks(i / downsample, j / downsample) += static_cast<double>(map(i, j));
  }
  double max_block = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks.data()[i] /= denom;
    max_block = std::max(max_block, blocks.data()[i]);
  }
  ImageU8 img;
  img.width = out_w;
  img.height = out_h;
  img.rgb.assign(static_cast<std::size_t>(out_w) * out_h * 3, 0);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      const std::uint8_t g = shade(blocks(i, j), max_block);
      const std::size_t base = (static_cast<std::size_t>(i) * out_w + j) * 3;
      img.rgb[base] = g;
      img.rgb[base + 1] = g;
      img.rgb[base + 2] = g;
    }
  }
  return img;
}

}  // namespace

ImageU8 render_heatmap(const MatF& map, int downsample) { return heatmap_impl(map, downsample); }
ImageU8 render_heatmap(const MatD& map, int downsample) { return heatmap_impl(map, downsample); }

ImageU8 heat_strip(const std::vector<double>& values, int height, int col_width) {
  if (values.empty()) throw ContractError("heat strip requires at least one value");
  if (height < 1 || col_width < 1) throw ConfigError("heat strip dimensions must be positive");
  double max_value = 0.0;
  for (double v : values) max_value = std::max(max_value, v);
  ImageU8 img;
  img.width = static_cast<int>(values.size()) * col_width;
  img.height = height;
  img.rgb.assign(static_cast<std::size_t>(img.width) * height * 3, 0);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const std::uint8_t g = shade(values[j / col_width], max_value);
      const std::size_t base = (static_cast<std::size_t>(i) * img.width + j) * 3;
      img.rgb[base] = g;
      img.rgb[base + 1] = g;
      img.rgb[base + 2] = g;
    }
  }
  return img;
}

void write_ppm(const std::string& path, const ImageU8& image) {
  if (image.width < 1 || image.height < 1 ||
      image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw ShapeError("image buffer does not match its dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace vdtlab
