#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "spcc/mat.hpp"

namespace spcc::core {

// Coordinates are capped at 21 bits per axis so a voxel packs into 63 bits.
constexpr int kCoordBits = 21;
constexpr std::int32_t kCoordMax = (1 << kCoordBits) - 1;

struct VoxelCoord {
  std::int32_t x = 0, y = 0, z = 0;

  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
  friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

// Lexicographic packing: sorting packed keys equals sorting (x, y, z).
inline std::uint64_t packCoord(const VoxelCoord& c) {
  return (static_cast<std::uint64_t>(c.x) << (2 * kCoordBits)) |
         (static_cast<std::uint64_t>(c.y) << kCoordBits) | static_cast<std::uint64_t>(c.z);
}
inline VoxelCoord unpackCoord(std::uint64_t k) {
  const std::uint64_t mask = (1u << kCoordBits) - 1;
  return {static_cast<std::int32_t>((k >> (2 * kCoordBits)) & mask),
          static_cast<std::int32_t>((k >> kCoordBits) & mask),
          static_cast<std::int32_t>(k & mask)};
}

using CoordList = std::vector<VoxelCoord>;

// Sorted unique voxel coordinates paired with an N x C feature matrix.
struct SparseTensor {
  CoordList coords;
  Mat features;  // rows == coords.size()

  SparseTensor() = default;
  SparseTensor(CoordList c, Mat f);

  std::size_t size() const { return coords.size(); }
  bool empty() const { return coords.empty(); }
  std::size_t channels() const { return features.cols; }
};

struct PointCloud {
  CoordList points;  // sorted, deduplicated
  std::vector<std::array<double, 3>> normals;  // optional, unit norm

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct Block {
  std::uint64_t index = 0;  // Morton code of origin / bs
  VoxelCoord origin;        // multiple of bs
  SparseTensor tensor;      // local coords in [0, bs)
};

// One rate point of the scalable chain.
struct CodingConfig {
  int qp = 1;    // 1..5
  int sf = 1;    // power of two
  bool sr = false;

  friend bool operator==(const CodingConfig&, const CodingConfig&) = default;
};

bool isPowerOfTwo(int v);
void validateConfig(const CodingConfig& cfg);

// Sort + dedup in place.
void canonicalize(CoordList& coords);

// Rounded division, ties half away from zero; dedups and sorts the result.
PointCloud downscaleCoords(const PointCloud& pc, int sf);
CoordList downscaleCoords(const CoordList& coords, int sf);

// Conv-style downscale: componentwise floor(c / f). Matches the coordinate
// rule of stride-2 sparse convolutions, so hyper coordinates derived on the
// decoder side agree with the encoder's transform exactly.
CoordList downscaleFloor(const CoordList& coords, int f);

CoordList upscaleCoords(const CoordList& coords, int factor);

std::vector<Block> splitBlocks(const PointCloud& pc, int bs);
PointCloud mergeBlocks(const std::vector<Block>& blocks);

// All 2c + {0,1}^3 children, sorted.
CoordList childCandidates(const CoordList& coords);

// label[i] = 1 iff candidates[i] is in target. Throws if some target
// coordinate is not covered by the candidate set.
std::vector<std::uint8_t> occupancyLabels(const CoordList& candidates, const CoordList& target);

// Coordinates of the k rows with the largest single-channel feature values.
// Ties prefer the lexicographically smaller coordinate. Result is sorted.
CoordList topKSelect(const SparseTensor& tensor, std::size_t k);

// Indices of the k nearest refs per query (squared Euclidean distance, ties
// by lower index). With fewer refs than k the nearest index is repeated.
std::vector<std::int32_t> knn(const CoordList& queries, const CoordList& refs, int k);

std::uint64_t mortonCode(const VoxelCoord& c);

}  // namespace spcc::core
