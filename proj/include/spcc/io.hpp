#pragma once

#include <string>

#include "spcc/srqh.hpp"

namespace spcc::io {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ASCII or binary-little-endian PLY with x,y,z (optionally nx,ny,nz).
// Coordinates are scaled by `scale` and rounded to the voxel grid.
core::PointCloud readPly(const std::string& path, double scale = 1.0);
void writePly(const core::PointCloud& pc, const std::string& path, bool binary = false);

// Scalable bitstream: "SPCC" magic, version byte, global header, then one
// length-prefixed segment per layer (BlockRecords for the base layer,
// EnhancementRecords afterwards) so later layers can be skipped unread.
struct Container {
  std::uint8_t version = 1;
  int depth = 10;  // voxel grid is [0, 2^depth)
  int bs = 64;
  std::vector<core::CodingConfig> chain;
  std::vector<base::BlockRecord> baseRecords;
  std::vector<std::vector<srqh::EnhancementRecord>> enhRecords;  // chain.size()-1
};

std::vector<std::uint8_t> serialize(const Container& c);
// maxLayer < 0 reads everything; otherwise layers maxLayer+1.. are skipped via
// their length prefixes and left empty.
Container parse(const std::vector<std::uint8_t>& bytes, int maxLayer = -1);
// Per-layer segment sizes straight from the prefixes; payloads untouched.
std::vector<std::size_t> layerSizes(const std::vector<std::uint8_t>& bytes);
// Bytes a decode of layers 0..t actually reads (header + those segments).
std::size_t bytesForLayer(const std::vector<std::uint8_t>& bytes, int t);

void writeFile(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> readFile(const std::string& path);

}  // namespace spcc::io
