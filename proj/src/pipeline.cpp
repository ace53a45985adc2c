#include "spcc/pipeline.hpp"

namespace spcc::pipeline {

using core::CodingConfig;
using core::PointCloud;

int gridDepth(const PointCloud& pc) {
  std::int32_t mx = 0;
  for (const auto& p : pc.points) mx = std::max({mx, p.x, p.y, p.z});
  int depth = 1;
  while ((std::int32_t(1) << depth) <= mx) ++depth;
  return depth;
}

ChainEncodeResult encodeChain(base::BaseModels& bm, nn::ParamStore* rq, const PointCloud& pc,
                              const std::vector<CodingConfig>& chain, int bs) {
  const auto layers = srqh::validateLayerChain(chain);
  if (!layers.empty() && rq == nullptr)
    throw std::invalid_argument("encodeChain: enhancement layers need RQuLPE models");
  if (pc.empty()) throw std::invalid_argument("encodeChain: empty cloud");

  ChainEncodeResult out;
  out.container.depth = gridDepth(pc);
  out.container.bs = bs;
  out.container.chain = chain;

  // Layer geometry is a floor-halving pyramid anchored at the finest layer's
  // rounded voxelization. Re-rounding the input per sf would let a coarse
  // voxel land one cell off its children's parent, breaking the parent
  // coverage the upscaling coordinate coder relies on; floor-halving makes
  // every coarse voxel the exact parent of some finer voxel by construction.
  std::vector<PointCloud> scaled(chain.size());
  scaled.back() = core::downscaleCoords(pc, chain.back().sf);
  for (std::size_t i = chain.size() - 1; i > 0; --i) {
    if (chain[i - 1].sf == chain[i].sf) {
      scaled[i - 1] = scaled[i];
    } else {
      scaled[i - 1].points = core::downscaleFloor(scaled[i].points, 2);
    }
  }

  auto baseEnc = base::encodeCloudBaseScaled(bm.at(chain[0].qp), scaled[0], chain[0].sf, bs);
  out.container.baseRecords = baseEnc.records;
  out.reconstructions.push_back(baseEnc.reconstructed);
  out.latents.push_back(baseEnc.yHatGlobal);
  out.payloadBytes.push_back(baseEnc.payloadBytes);

  core::SparseTensor src = std::move(baseEnc.yHatGlobal);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    auto enc = srqh::encodeEnhancementLayer(bm, *rq, scaled[i + 1], src, layer, bs);
    out.container.enhRecords.push_back(enc.records);
    out.reconstructions.push_back(enc.reconstructed);
    out.latents.push_back(enc.yHatGlobal);
    out.payloadBytes.push_back(enc.payloadBytes);
    src = std::move(enc.yHatGlobal);
  }
  return out;
}

ChainDecodeResult decodeChain(base::BaseModels& bm, nn::ParamStore* rq, const io::Container& c,
                              int t) {
  if (t < 0 || std::size_t(t) >= c.chain.size())
    throw std::invalid_argument("decodeChain: layer index out of range");
  const auto layers = srqh::validateLayerChain(c.chain);
  if (t > 0 && rq == nullptr)
    throw std::invalid_argument("decodeChain: enhancement layers need RQuLPE models");

  auto baseDec =
      base::decodeCloudBase(bm.at(c.chain[0].qp), c.baseRecords, c.chain[0].sf, c.bs);
  ChainDecodeResult out;
  out.reconstructed = std::move(baseDec.reconstructed);
  out.latents = std::move(baseDec.yHatGlobal);
  for (int i = 1; i <= t; ++i) {
    auto dec = srqh::decodeEnhancementLayer(bm, *rq, c.enhRecords[std::size_t(i - 1)],
                                            out.latents, layers[std::size_t(i - 1)], c.bs);
    out.reconstructed = std::move(dec.reconstructed);
    out.latents = std::move(dec.yHatGlobal);
  }
  return out;
}

}  // namespace spcc::pipeline
