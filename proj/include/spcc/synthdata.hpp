#pragma once

#include <cstdint>
#include <vector>

#include "spcc/core.hpp"

namespace spcc::synth {

// Procedural voxelized surfaces: the training/eval corpus at desk scale.
core::PointCloud sphere(std::uint64_t seed, int grid, double radius, double noise = 0.0);
core::PointCloud plane(std::uint64_t seed, int grid, double noise = 0.0);
core::PointCloud noisyMesh(std::uint64_t seed, int grid, int triangles, double noise = 0.0);

// Mixed corpus of the three families, deterministic in seed.
std::vector<core::PointCloud> corpus(std::uint64_t seed, int count, int grid);

}  // namespace spcc::synth
