#pragma once

#include "spcc/io.hpp"
#include "spcc/metrics.hpp"

namespace spcc::pipeline {

// Smallest depth whose grid [0, 2^depth) holds every point.
int gridDepth(const core::PointCloud& pc);

// Full scalable encode: base layer from chain[0], one SRQH enhancement layer
// per subsequent config. Per-layer reconstructions and decoded latents are
// kept for equivalence checks; payloadBytes counts model payload only (the
// container adds its own framing).
struct ChainEncodeResult {
  io::Container container;
  std::vector<core::PointCloud> reconstructions;   // per layer
  std::vector<core::SparseTensor> latents;         // decoded yHat per layer
  std::vector<std::size_t> payloadBytes;           // per layer
};
ChainEncodeResult encodeChain(base::BaseModels& bm, nn::ParamStore* rq,
                              const core::PointCloud& pc,
                              const std::vector<core::CodingConfig>& chain, int bs);

// Decode layers 0..t of a parsed container.
struct ChainDecodeResult {
  core::PointCloud reconstructed;  // at layer t's config
  core::SparseTensor latents;      // layer t's decoded yHat
};
ChainDecodeResult decodeChain(base::BaseModels& bm, nn::ParamStore* rq, const io::Container& c,
                              int t);

}  // namespace spcc::pipeline
