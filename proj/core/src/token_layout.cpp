#include "vdtlab/token_layout.hpp"

#include <cmath>
#include <string>

#include "vdtlab/errors.hpp"

namespace vdtlab {

void TokenLayout::validate() const {
  if (frames < 1 || height < 1 || width < 1)
    throw ConfigError("token layout requires positive frames, height, and width");
  if (text_tokens < 0) throw ConfigError("token layout requires nonnegative text_tokens");
}

int flatten_index(const TokenLayout& layout, int frame, int row, int col) {
  layout.validate();
  if (frame < 0 || frame >= layout.frames || row < 0 || row >= layout.height ||
      col < 0 || col >= layout.width)
    throw BoundsError("token coordinate out of range");
  return layout.vision_offset() + frame * layout.frame_size() + row * layout.width + col;
}

Coord unflatten_index(const TokenLayout& layout, int index) {
  layout.validate();
  const int v = index - layout.vision_offset();
  if (index < 0 || index >= layout.total_tokens() || v < 0 || v >= layout.vision_tokens())
    throw BoundsError("sequence index " + std::to_string(index) + " is not a vision token");
  Coord c;
  c.frame = v / layout.frame_size();
  const int in_frame = v % layout.frame_size();
  c.row = in_frame / layout.width;
  c.col = in_frame % layout.width;
  return c;
}

int text_index(const TokenLayout& layout, int t) {
  layout.validate();
  if (t < 0 || t >= layout.text_tokens) throw BoundsError("text token index out of range");
  return layout.text_offset() + t;
}

bool is_text_index(const TokenLayout& layout, int index) {
  if (index < 0 || index >= layout.total_tokens())
    throw BoundsError("sequence index out of range");
  const int t = index - layout.text_offset();
  return t >= 0 && t < layout.text_tokens;
}

namespace {

template <typename T>
BandMass band_mass_impl(const Matrix<T>& map, const TokenLayout& layout) {
  layout.validate();
  const int n = layout.total_tokens();
  if (map.rows() != n || map.cols() != n)
    throw ShapeError("attention map dimension does not match the layout");
  BandMass out;
  out.band.assign(layout.frames, 0.0);
  const int vis = layout.vision_tokens();
  const int off = layout.vision_offset();
  const int S = layout.frame_size();
  for (int vq = 0; vq < vis; ++vq) {
    const int fq = vq / S;
    auto row = map.row(off + vq);
    for (int vk = 0; vk < vis; ++vk) {
      const int fk = vk / S;
      out.band[std::abs(fq - fk)] += static_cast<double>(row[off + vk]);
    }
    for (int t = 0; t < layout.text_tokens; ++t)
      out.text_mass += static_cast<double>(row[layout.text_offset() + t]);
  }
  for (double& b : out.band) b /= vis;
  out.text_mass /= vis;
  return out;
}

template <typename T>
TextShare text_share_impl(const Matrix<T>& map, const TokenLayout& layout) {
  layout.validate();
  if (layout.text_tokens < 1)
    throw NotApplicableError("text attention share requires at least one text token");
  const int n = layout.total_tokens();
  if (map.rows() != n || map.cols() != n)
    throw ShapeError("attention map dimension does not match the layout");
  TextShare out;
  out.share.assign(layout.text_tokens, 0.0);
  const int vis = layout.vision_tokens();
  const int off = layout.vision_offset();
  for (int vq = 0; vq < vis; ++vq) {
    auto row = map.row(off + vq);
    for (int t = 0; t < layout.text_tokens; ++t)
      out.share[t] += static_cast<double>(row[layout.text_offset() + t]);
  }
  double total = 0.0;
  for (double& s : out.share) {
    s /= vis;
    total += s;
  }
  out.first_token_dominance = total > 0.0 ? out.share[0] / total : 0.0;
  return out;
}

}  // namespace

BandMass frame_offset_mass(const MatF& map, const TokenLayout& layout) {
  return band_mass_impl(map, layout);
}
BandMass frame_offset_mass(const MatD& map, const TokenLayout& layout) {
  return band_mass_impl(map, layout);
}

TextShare text_attention_share(const MatF& map, const TokenLayout& layout) {
  return text_share_impl(map, layout);
}
TextShare text_attention_share(const MatD& map, const TokenLayout& layout) {
  return text_share_impl(map, layout);
}

StructureReport structure_report(const MatF& map, const TokenLayout& layout) {
  StructureReport r;
  r.band_mass = frame_offset_mass(map, layout);
  if (layout.text_tokens > 0) r.text_share = text_attention_share(map, layout);
  return r;
}

}  // namespace vdtlab
