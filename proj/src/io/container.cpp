#include "spcc/io.hpp"

#include <cstring>

namespace spcc::io {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'C', 'C'};

struct Writer {
  std::vector<std::uint8_t> out;

  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(std::uint32_t(v)); }
  void bytes(const std::vector<std::uint8_t>& b) {
    u32(std::uint32_t(b.size()));
    out.insert(out.end(), b.begin(), b.end());
  }
  void rans(const entropy::RansStream& s) {
    u32(s.symbolCount);
    bytes(s.bytes);
  }
  void coord(const core::VoxelCoord& c) {
    i32(c.x);
    i32(c.y);
    i32(c.z);
  }
};

struct Reader {
  const std::vector<std::uint8_t>& in;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("container parse error at byte " + std::to_string(pos) + ": " + what);
  }
  void need(std::size_t n) const {
    if (pos + n > in.size()) fail("truncated stream");
  }
  std::uint8_t u8() {
    need(1);
    return in[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(in[pos++]) << (8 * i);
    return v;
  }
  std::int32_t i32() { return std::int32_t(u32()); }
  std::vector<std::uint8_t> bytes() {
    const std::uint32_t n = u32();
    need(n);
    std::vector<std::uint8_t> b(in.begin() + std::ptrdiff_t(pos),
                                in.begin() + std::ptrdiff_t(pos + n));
    pos += n;
    return b;
  }
  entropy::RansStream rans() {
    entropy::RansStream s;
    s.symbolCount = u32();
    s.bytes = bytes();
    return s;
  }
  core::VoxelCoord coord() {
    core::VoxelCoord c;
    c.x = i32();
    c.y = i32();
    c.z = i32();
    return c;
  }
};

void writeBaseRecord(Writer& w, const base::BlockRecord& r) {
  w.u64(r.blockId);
  w.coord(r.origin);
  w.u32(r.k);
  w.u8(std::uint8_t(r.coordsStream.depth));
  w.bytes(r.coordsStream.occupancyBytes);
  w.rans(r.hyperStream);
  w.rans(r.latentStream);
}

base::BlockRecord readBaseRecord(Reader& r) {
  base::BlockRecord rec;
  rec.blockId = r.u64();
  rec.origin = r.coord();
  rec.k = r.u32();
  rec.coordsStream.depth = r.u8();
  rec.coordsStream.occupancyBytes = r.bytes();
  rec.hyperStream = r.rans();
  rec.latentStream = r.rans();
  return rec;
}

void writeEnhRecord(Writer& w, const srqh::EnhancementRecord& r) {
  w.u64(r.blockId);
  w.coord(r.origin);
  w.u32(r.k);
  w.u8(r.hasCoords ? 1 : 0);
  if (r.hasCoords) w.rans(r.coordsStream);
  w.rans(r.latentStream);
}

srqh::EnhancementRecord readEnhRecord(Reader& r) {
  srqh::EnhancementRecord rec;
  rec.blockId = r.u64();
  rec.origin = r.coord();
  rec.k = r.u32();
  rec.hasCoords = r.u8() != 0;
  if (rec.hasCoords) rec.coordsStream = r.rans();
  rec.latentStream = r.rans();
  return rec;
}

// Header through the chain, before the layer segments.
void writeHeader(Writer& w, const Container& c) {
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.u8(c.version);
  w.u8(std::uint8_t(c.depth));
  w.u32(std::uint32_t(c.bs));
  w.u8(std::uint8_t(c.chain.size()));
  for (const auto& cc : c.chain) {
    w.u8(std::uint8_t(cc.qp));
    w.u8(std::uint8_t(cc.sf));
    w.u8(cc.sr ? 1 : 0);
  }
}

Container readHeader(Reader& r) {
  r.need(4);
  if (std::memcmp(r.in.data(), kMagic, 4) != 0) r.fail("bad magic");
  r.pos += 4;
  Container c;
  c.version = r.u8();
  if (c.version != 1) r.fail("unsupported version " + std::to_string(c.version));
  c.depth = r.u8();
  c.bs = int(r.u32());
  const std::size_t layers = r.u8();
  if (layers == 0) r.fail("empty layer chain");
  for (std::size_t i = 0; i < layers; ++i) {
    core::CodingConfig cc;
    cc.qp = r.u8();
    cc.sf = r.u8();
    cc.sr = r.u8() != 0;
    c.chain.push_back(cc);
  }
  return c;
}

}  // namespace

std::vector<std::uint8_t> serialize(const Container& c) {
  if (c.chain.empty()) throw std::invalid_argument("serialize: empty chain");
  if (c.enhRecords.size() + 1 != c.chain.size())
    throw std::invalid_argument("serialize: layer count mismatch");
  Writer w;
  writeHeader(w, c);
  for (std::size_t layer = 0; layer < c.chain.size(); ++layer) {
    Writer seg;
    if (layer == 0) {
      seg.u32(std::uint32_t(c.baseRecords.size()));
      for (const auto& rec : c.baseRecords) writeBaseRecord(seg, rec);
    } else {
      const auto& recs = c.enhRecords[layer - 1];
      seg.u32(std::uint32_t(recs.size()));
      for (const auto& rec : recs) writeEnhRecord(seg, rec);
    }
    w.bytes(seg.out);
  }
  return w.out;
}

Container parse(const std::vector<std::uint8_t>& bytes, int maxLayer) {
  Reader r{bytes};
  Container c = readHeader(r);
  for (std::size_t layer = 0; layer < c.chain.size(); ++layer) {
    const std::uint32_t segLen = r.u32();
    r.need(segLen);
    if (maxLayer >= 0 && layer > std::size_t(maxLayer)) {
      r.pos += segLen;  // skip unread
      if (layer > 0) c.enhRecords.emplace_back();
      continue;
    }
    const std::size_t segEnd = r.pos + segLen;
    const std::uint32_t count = r.u32();
    if (layer == 0) {
      for (std::uint32_t i = 0; i < count; ++i) c.baseRecords.push_back(readBaseRecord(r));
    } else {
      std::vector<srqh::EnhancementRecord> recs;
      for (std::uint32_t i = 0; i < count; ++i) recs.push_back(readEnhRecord(r));
      c.enhRecords.push_back(std::move(recs));
    }
    if (r.pos != segEnd) r.fail("layer segment length mismatch");
  }
  if (r.pos != bytes.size()) r.fail("trailing bytes");
  return c;
}

std::vector<std::size_t> layerSizes(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  Container c = readHeader(r);
  std::vector<std::size_t> sizes;
  for (std::size_t layer = 0; layer < c.chain.size(); ++layer) {
    const std::uint32_t segLen = r.u32();
    r.need(segLen);
    r.pos += segLen;
    sizes.push_back(segLen);
  }
  if (r.pos != bytes.size()) r.fail("trailing bytes");
  return sizes;
}

std::size_t bytesForLayer(const std::vector<std::uint8_t>& bytes, int t) {
  const auto sizes = layerSizes(bytes);
  if (t < 0 || std::size_t(t) >= sizes.size())
    throw std::invalid_argument("bytesForLayer: layer index out of range");
  Reader r{bytes};
  readHeader(r);
  std::size_t total = r.pos;
  for (int i = 0; i <= t; ++i) total += 4 + sizes[std::size_t(i)];
  return total;
}

}  // namespace spcc::io
