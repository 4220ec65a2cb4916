#pragma once

#include <vector>

#include "vdtlab/mat.hpp"

namespace vdtlab {

enum class TextPosition { kPrefix, kSuffix };

// Bijective mapping between (frame, row, col) / text slots and flattened
// sequence indices. Vision tokens are laid out frame-major, then row, then
// column; the text block sits before or after the vision block.
struct TokenLayout {
  int frames = 1;      // F
  int height = 1;      // H
  int width = 1;       // W
  int text_tokens = 0; // T_text
  TextPosition text_position = TextPosition::kSuffix;

  int frame_size() const { return height * width; }  // S
  int vision_tokens() const { return frames * frame_size(); }
  int total_tokens() const { return vision_tokens() + text_tokens; }
  int vision_offset() const {
    return text_position == TextPosition::kPrefix ? text_tokens : 0;
  }
  int text_offset() const {
    return text_position == TextPosition::kPrefix ? 0 : vision_tokens();
  }

  void validate() const;  // ConfigError on nonpositive dims or negative T_text

  bool operator==(const TokenLayout&) const = default;
};

struct Coord {
  int frame = 0;
  int row = 0;
  int col = 0;
};

int flatten_index(const TokenLayout& layout, int frame, int row, int col);
// Inverse of flatten_index; the index must name a vision token.
Coord unflatten_index(const TokenLayout& layout, int index);
// Sequence index of text token t.
int text_index(const TokenLayout& layout, int t);
bool is_text_index(const TokenLayout& layout, int index);

// Attention structure metrics over one map.
struct BandMass {
  std::vector<double> band;  // indexed by frame offset delta in [0, F)
  double text_mass = 0.0;    // mean mass vision queries place on text keys
};

struct TextShare {
  std::vector<double> share;  // per text token, mean over vision query rows
  double first_token_dominance = 0.0;  // share[0] / sum(share), 0 if sum is 0
};

// Mean over vision query rows of attention mass on vision keys at frame
// offset |f_q - f_k| = delta; text mass reported separately.
BandMass frame_offset_mass(const MatF& map, const TokenLayout& layout);
BandMass frame_offset_mass(const MatD& map, const TokenLayout& layout);

// Mean attention each text token receives from vision query rows.
TextShare text_attention_share(const MatF& map, const TokenLayout& layout);
TextShare text_attention_share(const MatD& map, const TokenLayout& layout);

struct StructureReport {
  BandMass band_mass;
  TextShare text_share;  // empty share vector when the layout has no text
};

StructureReport structure_report(const MatF& map, const TokenLayout& layout);

}  // namespace vdtlab
