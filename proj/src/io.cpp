#include "bnnfi/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "bnnfi/error.hpp"

namespace bnnfi {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

class LeWriter {
 public:
  void u16(std::uint16_t v) {
    bytes.push_back(static_cast<std::uint8_t>(v));
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>(v >> s));
  }
  std::vector<std::uint8_t> bytes;
};

class LeReader {
 public:
  explicit LeReader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint16_t u16(const char* field) {
    need(2, field);
    const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* field) {
    need(n, field);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const noexcept { return pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (b_.size() - pos_ < n) {
      throw ParseError(std::string("model file: truncated while reading ") + field);
    }
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::span<const std::uint8_t> IdxImageSet::image(std::size_t i) const {
  if (i >= count) throw ContractError("IdxImageSet::image: index out of range");
  const std::size_t n = rows * cols;
  return std::span<const std::uint8_t>(pixels).subspan(i * n, n);
}

IdxImageSet parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw ParseError("idx images: truncated header (need 16 bytes)");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    throw ParseError("idx images: bad magic " + hex32(magic) + " (expected 0x803)");
  }
  IdxImageSet set;
  set.count = read_be32(bytes, 4);
  set.rows = read_be32(bytes, 8);
  set.cols = read_be32(bytes, 12);
  const std::size_t expected = set.count * set.rows * set.cols;
  if (bytes.size() - 16 < expected) {
    throw ParseError("idx images: truncated payload (count " + std::to_string(set.count) +
                     " needs " + std::to_string(expected) + " bytes, have " +
                     std::to_string(bytes.size() - 16) + ")");
  }
  set.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(expected));
  return set;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw ParseError("idx labels: truncated header (need 8 bytes)");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic) {
    throw ParseError("idx labels: bad magic " + hex32(magic) + " (expected 0x801)");
  }
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() - 8 < count) {
    throw ParseError("idx labels: truncated payload (count " + std::to_string(count) +
                     ", have " + std::to_string(bytes.size() - 8) + " bytes)");
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

IdxDataset read_idx(const std::filesystem::path& images,
                    const std::optional<std::filesystem::path>& labels) {
  IdxDataset d;
  d.images = parse_idx_images(read_file_bytes(images));
  if (labels) {
    d.labels = parse_idx_labels(read_file_bytes(*labels));
    if (d.labels.size() != d.images.count) {
      throw ParseError("idx: label count " + std::to_string(d.labels.size()) +
                       " does not match image count " + std::to_string(d.images.count));
    }
  }
  return d;
}

std::vector<std::uint8_t> encode_idx_images(const IdxImageSet& images) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed in chunks for very large buffers.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1U << 30);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_model(const Model& model) {
  model.validate();
  LeWriter w;
  w.bytes = {'B', 'N', 'N', 'W'};
  w.u16(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(model.topology.layers.size()));
  for (std::size_t l = 0; l < model.topology.layers.size(); ++l) {
    const auto& spec = model.topology.layers[l];
    w.u32(static_cast<std::uint32_t>(spec.in_features));
    w.u32(static_cast<std::uint32_t>(spec.out_features));
    w.u32(static_cast<std::uint32_t>(spec.pe));
    w.u32(static_cast<std::uint32_t>(spec.simd));
    const auto& m = model.weights[l];
    std::vector<std::uint8_t> packed((m.bit_count() + 7) / 8, 0);
    for (std::size_t i = 0; i < m.bit_count(); ++i) {
      if (m.get_flat(i)) packed[i / 8] |= static_cast<std::uint8_t>(1U << (i % 8));
    }
    w.bytes.insert(w.bytes.end(), packed.begin(), packed.end());
    for (std::size_t r = 0; r < spec.out_features; ++r) {
      w.u32(spec.is_output ? 0U : static_cast<std::uint32_t>(model.thresholds[l][r]));
    }
  }
  w.u32(crc32(w.bytes));
  return w.bytes;
}

Model decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'B' || bytes[1] != 'N' || bytes[2] != 'N' || bytes[3] != 'W') {
    throw ParseError("model file: bad magic (expected \"BNNW\")");
  }
  LeReader r(bytes);
  r.take(4, "magic");
  const std::uint16_t version = r.u16("version");
  if (version != kModelFormatVersion) {
    throw ParseError("model file: unsupported version " + std::to_string(version));
  }
  if (bytes.size() < 10) throw ParseError("model file: truncated while reading checksum");
  const auto body = bytes.first(bytes.size() - 4);
  const std::uint32_t stored = static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
                               (static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8) |
                               (static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24);
  if (crc32(body) != stored) throw ParseError("model file: checksum mismatch");

  LeReader br(body);
  br.take(6, "header");
  const std::uint32_t layer_count = br.u32("layer_count");
  if (layer_count == 0) throw ParseError("model file: layer_count is zero");
  Model m;
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    LayerSpec spec;
    spec.layer_id = l;
    spec.in_features = br.u32("in_features");
    spec.out_features = br.u32("out_features");
    spec.pe = br.u32("pe");
    spec.simd = br.u32("simd");
    spec.is_output = l + 1 == layer_count;
    if (spec.in_features == 0 || spec.out_features == 0) {
      throw ParseError("model file: layer " + std::to_string(l) + " has a zero dimension");
    }
    const std::uint64_t nbits = std::uint64_t{spec.in_features} * spec.out_features;
    if (nbits / 8 > body.size()) {
      throw ParseError("model file: layer " + std::to_string(l) + " size exceeds payload");
    }
    const auto packed = br.take(static_cast<std::size_t>((nbits + 7) / 8), "weights");
    BitMatrix w(spec.out_features, spec.in_features);
    for (std::size_t i = 0; i < nbits; ++i) {
      if ((packed[i / 8] >> (i % 8)) & 1U) w.flip_flat(i);
    }
    ThresholdVector t(spec.out_features);
    for (auto& v : t) v = static_cast<std::int32_t>(br.u32("thresholds"));
    m.topology.layers.push_back(spec);
    m.weights.push_back(std::move(w));
    m.thresholds.push_back(std::move(t));
  }
  if (br.pos() != body.size()) {
    throw ParseError("model file: " + std::to_string(body.size() - br.pos()) +
                     " trailing bytes after the declared layers");
  }
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("model file: inconsistent topology: ") + e.what());
  }
  return m;
}

void write_model(const std::filesystem::path& path, const Model& model) {
  write_file_bytes(path, encode_model(model));
}

Model read_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace bnnfi
