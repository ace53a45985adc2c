#pragma once

#include <cstdint>
#include <vector>

#include "spcc/core.hpp"

namespace spcc::octree {

// Breadth-first occupancy bytes, one byte per internal node. Child bit
// b = 4*i + 2*j + k for offset (i, j, k), shared with childCandidates.
struct OctreeStream {
  int depth = 1;
  std::vector<std::uint8_t> occupancyBytes;
};

struct CorruptStream : std::runtime_error {
  using std::runtime_error::runtime_error;
};

OctreeStream encode(const core::CoordList& coords, int depth);
core::CoordList decode(const OctreeStream& stream);

}  // namespace spcc::octree
