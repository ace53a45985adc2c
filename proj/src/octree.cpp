#include "spcc/octree.hpp"

#include <algorithm>

namespace spcc::octree {

using core::CoordList;
using core::VoxelCoord;

namespace {
// Morton code restricted to `depth` levels, x in the high bit of each triple.
std::uint64_t mortonAtDepth(const VoxelCoord& c, int depth) {
  std::uint64_t code = 0;
  for (int b = 0; b < depth; ++b) {
    code |= (std::uint64_t(c.x >> b) & 1u) << (3 * b + 2);
    code |= (std::uint64_t(c.y >> b) & 1u) << (3 * b + 1);
    code |= (std::uint64_t(c.z >> b) & 1u) << (3 * b);
  }
  return code;
}

VoxelCoord fromMorton(std::uint64_t code, int depth) {
  VoxelCoord c;
  for (int b = 0; b < depth; ++b) {
    c.x |= std::int32_t((code >> (3 * b + 2)) & 1u) << b;
    c.y |= std::int32_t((code >> (3 * b + 1)) & 1u) << b;
    c.z |= std::int32_t((code >> (3 * b)) & 1u) << b;
  }
  return c;
}
}  // namespace

OctreeStream encode(const CoordList& coords, int depth) {
  if (depth < 1 || depth > core::kCoordBits) throw std::invalid_argument("octree: bad depth");
  if (coords.empty()) throw std::invalid_argument("octree: empty coordinate set");
  const std::int32_t limit = 1 << depth;
  std::vector<std::uint64_t> codes;
  codes.reserve(coords.size());
  for (const auto& c : coords) {
    if (c.x >= limit || c.y >= limit || c.z >= limit)
      throw std::range_error("octree: coordinate out of range for depth");
    codes.push_back(mortonAtDepth(c, depth));
  }
  std::sort(codes.begin(), codes.end());
  codes.erase(std::unique(codes.begin(), codes.end()), codes.end());

  OctreeStream out;
  out.depth = depth;
  // Level l nodes are ranges of codes sharing the top 3*l bits.
  struct Range {
    std::size_t begin, end;
  };
  std::vector<Range> nodes{{0, codes.size()}};
  for (int level = 0; level < depth; ++level) {
    const int shift = 3 * (depth - level - 1);
    std::vector<Range> next;
    for (const auto& node : nodes) {
      std::uint8_t occ = 0;
      std::size_t i = node.begin;
      while (i < node.end) {
        const unsigned child = (codes[i] >> shift) & 7u;
        std::size_t j = i;
        while (j < node.end && ((codes[j] >> shift) & 7u) == child) ++j;
        occ |= std::uint8_t(1u << child);
        next.push_back({i, j});
        i = j;
      }
      out.occupancyBytes.push_back(occ);
    }
    nodes = std::move(next);
  }
  return out;
}

CoordList decode(const OctreeStream& stream) {
  if (stream.depth < 1 || stream.depth > core::kCoordBits)
    throw CorruptStream("octree: bad depth");
  std::size_t pos = 0;
  std::vector<std::uint64_t> prefixes{0};
  for (int level = 0; level < stream.depth; ++level) {
    std::vector<std::uint64_t> next;
    for (std::uint64_t prefix : prefixes) {
      if (pos >= stream.occupancyBytes.size()) throw CorruptStream("octree: truncated stream");
      const std::uint8_t occ = stream.occupancyBytes[pos++];
      if (occ == 0) throw CorruptStream("octree: zero occupancy byte");
      for (unsigned child = 0; child < 8; ++child)
        if (occ & (1u << child)) next.push_back((prefix << 3) | child);
    }
    prefixes = std::move(next);
  }
  if (pos != stream.occupancyBytes.size()) throw CorruptStream("octree: trailing bytes");
  CoordList out;
  out.reserve(prefixes.size());
  for (std::uint64_t code : prefixes) out.push_back(fromMorton(code, stream.depth));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace spcc::octree
