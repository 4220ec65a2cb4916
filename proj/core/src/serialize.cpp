#include "vdtlab/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vdtlab/errors.hpp"

namespace vdtlab {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kLatentsVersion = 1;
constexpr std::uint32_t kTraceVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void magic(const char m[4]) { bytes(m, 4); }
  void close() {
    out_.flush();
    if (!out_) throw IoError("failed writing " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path + " for reading");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError(path_ + " is truncated");
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void expect_magic(const char m[4], const char* what) {
    char b[4];
    bytes(b, 4);
    if (std::memcmp(b, m, 4) != 0)
      throw IoError(path_ + " is not a " + what + " file");
  }
  void expect_end() {
    char b;
    in_.read(&b, 1);
    if (!in_.eof()) throw IoError(path_ + " has trailing bytes");
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

int checked_dim(std::uint32_t v, const char* what, const std::string& path) {
  if (v > (1u << 24)) throw IoError(path + " has an implausible " + what);
  return static_cast<int>(v);
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  const ModelConfig& c = model.config();
  Writer w(path);
  w.magic("TVDT");
  w.u32(kCheckpointVersion);
  w.u8(c.arch == Arch::kJoint ? 0 : 1);
  w.u8(c.text_position == TextPosition::kPrefix ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(c.layers));
  w.u32(static_cast<std::uint32_t>(c.heads));
  w.u32(static_cast<std::uint32_t>(c.head_dim));
  w.u32(static_cast<std::uint32_t>(c.frames));
  w.u32(static_cast<std::uint32_t>(c.height));
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.text_tokens));
  w.u32(static_cast<std::uint32_t>(c.latent_dim));
  w.u32(static_cast<std::uint32_t>(c.mlp_hidden));
  w.u32(static_cast<std::uint32_t>(c.default_steps));
  w.u64(c.param_seed);
  w.u64(model.param_count());
  for (double p : model.params()) w.f32(static_cast<float>(p));
  w.close();
}

Model load_checkpoint(const std::string& path) {
  Reader r(path);
  r.expect_magic("TVDT", "checkpoint");
  if (r.u32() != kCheckpointVersion) throw IoError(path + " has an unsupported version");
  ModelConfig c;
  const std::uint8_t arch = r.u8();
  if (arch > 1) throw IoError(path + " has an unknown architecture tag");
  c.arch = arch == 0 ? Arch::kJoint : Arch::kAdditive;
  const std::uint8_t tp = r.u8();
  if (tp > 1) throw IoError(path + " has an unknown text position tag");
  c.text_position = tp == 0 ? TextPosition::kPrefix : TextPosition::kSuffix;
  c.layers = checked_dim(r.u32(), "layer count", path);
  c.heads = checked_dim(r.u32(), "head count", path);
  c.head_dim = checked_dim(r.u32(), "head dim", path);
  c.frames = checked_dim(r.u32(), "frame count", path);
  c.height = checked_dim(r.u32(), "height", path);
  c.width = checked_dim(r.u32(), "width", path);
  c.text_tokens = checked_dim(r.u32(), "text token count", path);
  c.latent_dim = checked_dim(r.u32(), "latent dim", path);
  c.mlp_hidden = checked_dim(r.u32(), "mlp width", path);
  c.default_steps = checked_dim(r.u32(), "step count", path);
  c.param_seed = r.u64();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw IoError(path + " holds an invalid config: " + e.what());
  }
  const std::uint64_t count = r.u64();
  if (count != param_count(c))
    throw IoError(path + " parameter count does not match its config");
  std::vector<double> params(count);
  for (std::uint64_t i = 0; i < count; ++i) params[i] = static_cast<double>(r.f32());
  r.expect_end();
  return Model::from_params(c, std::move(params));
}

void save_latents(const std::string& path, const MatD& latents, int frames, int height,
                  int width, int latent_dim) {
  if (latents.rows() != frames * height * width || latents.cols() != latent_dim)
    throw ShapeError("latent dimensions do not match the stated video shape");
  Writer w(path);
  w.magic("TVLT");
  w.u32(kLatentsVersion);
  w.u32(static_cast<std::uint32_t>(frames));
  w.u32(static_cast<std::uint32_t>(height));
  w.u32(static_cast<std::uint32_t>(width));
  w.u32(static_cast<std::uint32_t>(latent_dim));
  for (std::size_t i = 0; i < latents.size(); ++i) w.f64(latents.data()[i]);
  w.close();
}

LoadedLatents load_latents(const std::string& path) {
  Reader r(path);
  r.expect_magic("TVLT", "latent");
  if (r.u32() != kLatentsVersion) throw IoError(path + " has an unsupported version");
  LoadedLatents out;
  out.frames = checked_dim(r.u32(), "frame count", path);
  out.height = checked_dim(r.u32(), "height", path);
  out.width = checked_dim(r.u32(), "width", path);
  out.latent_dim = checked_dim(r.u32(), "latent dim", path);
  out.data = MatD(out.frames * out.height * out.width, out.latent_dim);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data.data()[i] = r.f64();
  r.expect_end();
  return out;
}

std::size_t AttentionTrace::bit_index(int layer, int head, int step) const {
  return (static_cast<std::size_t>(step) * layers + layer) * heads + head;
}

bool AttentionTrace::has_record(int layer, int head, int step) const {
  if (layer < 0 || layer >= layers || head < 0 || head >= heads || step < 0 || step >= steps)
    return false;
  const std::size_t bit = bit_index(layer, head, step);
  if (bit / 8 >= filter_bitmap.size()) return false;
  return (filter_bitmap[bit / 8] >> (bit % 8)) & 1u;
}

const AttentionRecord* AttentionTrace::find(int layer, int head, int step) const {
  auto key = [](const AttentionRecord& r) {
    return std::tuple<int, int, int>(r.step, r.layer, r.head);
  };
  const std::tuple<int, int, int> want(step, layer, head);
  std::size_t lo = 0, hi = records.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (key(records[mid]) < want)
      lo = mid + 1;
    else
      hi = mid;
  }
  if (lo < records.size() && key(records[lo]) == want) return &records[lo];
  return nullptr;
}

std::set<int> AttentionTrace::traced_layers() const {
  std::set<int> out;
  for (const AttentionRecord& r : records) out.insert(r.layer);
  return out;
}

void AttentionTrace::validate() const {
  layout.validate();
  if (layers < 1 || heads < 1 || steps < 1)
    throw ContractError("trace dimensions must be positive");
  const std::size_t bits = static_cast<std::size_t>(steps) * layers * heads;
  if (filter_bitmap.size() != (bits + 7) / 8)
    throw ContractError("trace bitmap size does not match its dimensions");
  std::size_t set_bits = 0;
  for (std::size_t bit = 0; bit < bits; ++bit)
    set_bits += (filter_bitmap[bit / 8] >> (bit % 8)) & 1u;
  if (set_bits != records.size())
    throw ContractError("trace has " + std::to_string(records.size()) +
                        " records but the bitmap marks " + std::to_string(set_bits));
  const int n = layout.total_tokens();
  std::size_t idx = 0;
  for (int s = 0; s < steps; ++s) {
    for (int l = 0; l < layers; ++l) {
      for (int h = 0; h < heads; ++h) {
        if (!has_record(l, h, s)) continue;
        const AttentionRecord& r = records[idx++];
        if (r.step != s || r.layer != l || r.head != h)
          throw ContractError("trace records are out of (step, layer, head) order");
        if (r.map.rows() != n || r.map.cols() != n)
          throw ContractError("trace record dimensions do not match the layout");
      }
    }
  }
}

void save_trace(const std::string& path, const AttentionTrace& trace) {
  trace.validate();
  Writer w(path);
  w.magic("ATRC");
  w.u32(kTraceVersion);
  w.u32(static_cast<std::uint32_t>(trace.layout.frames));
  w.u32(static_cast<std::uint32_t>(trace.layout.height));
  w.u32(static_cast<std::uint32_t>(trace.layout.width));
  w.u32(static_cast<std::uint32_t>(trace.layout.text_tokens));
  w.u8(trace.layout.text_position == TextPosition::kPrefix ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(trace.layers));
  w.u32(static_cast<std::uint32_t>(trace.heads));
  w.u32(static_cast<std::uint32_t>(trace.steps));
  w.u32(static_cast<std::uint32_t>(trace.filter_bitmap.size()));
  if (!trace.filter_bitmap.empty())
    w.bytes(trace.filter_bitmap.data(), trace.filter_bitmap.size());
  w.u64(trace.manifest_json.size());
  if (!trace.manifest_json.empty())
    w.bytes(trace.manifest_json.data(), trace.manifest_json.size());
  for (const AttentionRecord& r : trace.records)
    for (std::size_t i = 0; i < r.map.size(); ++i) w.f32(r.map.data()[i]);
  w.close();
}

AttentionTrace load_trace(const std::string& path) {
  Reader r(path);
  r.expect_magic("ATRC", "trace");
  if (r.u32() != kTraceVersion) throw IoError(path + " has an unsupported version");
  AttentionTrace t;
  t.layout.frames = checked_dim(r.u32(), "frame count", path);
  t.layout.height = checked_dim(r.u32(), "height", path);
  t.layout.width = checked_dim(r.u32(), "width", path);
  t.layout.text_tokens = checked_dim(r.u32(), "text token count", path);
  const std::uint8_t tp = r.u8();
  if (tp > 1) throw IoError(path + " has an unknown text position tag");
  t.layout.text_position = tp == 0 ? TextPosition::kPrefix : TextPosition::kSuffix;
  t.layers = checked_dim(r.u32(), "layer count", path);
  t.heads = checked_dim(r.u32(), "head count", path);
  t.steps = checked_dim(r.u32(), "step count", path);
  const std::uint32_t bitmap_len = r.u32();
  const std::size_t bits = static_cast<std::size_t>(t.steps) * t.layers * t.heads;
  if (bitmap_len != (bits + 7) / 8)
    throw IoError(path + " bitmap length does not match its dimensions");
  t.filter_bitmap.resize(bitmap_len);
  if (bitmap_len > 0) r.bytes(t.filter_bitmap.data(), bitmap_len);
  const std::uint64_t manifest_len = r.u64();
  if (manifest_len > (std::uint64_t{1} << 32)) throw IoError(path + " manifest is implausibly large");
  t.manifest_json.resize(manifest_len);
  if (manifest_len > 0) r.bytes(t.manifest_json.data(), manifest_len);
  const int n = t.layout.total_tokens();
  for (int s = 0; s < t.steps; ++s) {
    for (int l = 0; l < t.layers; ++l) {
      for (int h = 0; h < t.heads; ++h) {
        const std::size_t bit = t.bit_index(l, h, s);
        if (!((t.filter_bitmap[bit / 8] >> (bit % 8)) & 1u)) continue;
        AttentionRecord rec;
        rec.layer = l;
        rec.head = h;
        rec.step = s;
        rec.map = MatF(n, n);
        for (std::size_t i = 0; i < rec.map.size(); ++i) rec.map.data()[i] = r.f32();
        t.records.push_back(std::move(rec));
      }
    }
  }
  r.expect_end();
  t.validate();
  return t;
}

}  // namespace vdtlab
