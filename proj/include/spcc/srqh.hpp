#pragma once

#include <iosfwd>

#include "spcc/basecodec.hpp"

namespace spcc::srqh {

constexpr std::size_t kEmbedDim = 16;
constexpr std::size_t kAttnWidth = base::kLatentCh + kEmbedDim;  // after concat
constexpr std::size_t kAttnDim = 32;
constexpr int kNeighbors = 5;

struct LayerConfig {
  core::CodingConfig source;
  core::CodingConfig target;
  bool up = false;  // source.sf == 2 * target.sf
};

// Consecutive chain entries become layer configs; violations throw
// std::invalid_argument naming the offending pair and rule.
std::vector<LayerConfig> validateLayerChain(const std::vector<core::CodingConfig>& chain);

// RQuLPE-C: occupancy probabilities on child_candidates(ySrcHat.coords).
core::SparseTensor rqulpeCForward(nn::ParamStore& p, const core::SparseTensor& ySrcHat,
                                  int qpS);

// Lossless 2x coordinate enhancement under per-candidate Bernoulli models.
entropy::RansStream encodeCoordEnhancement(nn::ParamStore& p, const core::SparseTensor& ySrcHat,
                                           int qpS, const core::CoordList& yTC);
core::CoordList decodeCoordEnhancement(nn::ParamStore& p, const core::SparseTensor& ySrcHat,
                                       int qpS, const entropy::RansStream& stream);

// kNN-average of source features at every target coordinate (source coords
// lifted x2 when up so distances are taken at the target scale).
core::SparseTensor coarseEstimate(const core::SparseTensor& ySrcHat, const core::CoordList& yTC,
                                  bool up);

// Shared coding-parameter embedding of one-hot (qp_s, qp_t, up).
Mat embedParams(nn::ParamStore& p, int qpS, int qpT, bool up);

// RQuLPE-F: (mu, sigma) for every target latent coefficient, row-major.
entropy::GaussianParams rqulpeFForward(nn::ParamStore& p, const core::SparseTensor& ySrcHat,
                                       const core::CoordList& yTC, int qpS, int qpT, bool up);

struct EnhancementRecord {
  std::uint64_t blockId = 0;
  core::VoxelCoord origin;  // target-scale block origin
  std::uint32_t k = 1;
  bool hasCoords = false;  // present exactly when the layer upscales
  entropy::RansStream coordsStream;
  entropy::RansStream latentStream;
};

struct EncodedLayer {
  std::vector<EnhancementRecord> records;
  core::SparseTensor yHatGlobal;   // decoded target latents, global latent coords
  core::PointCloud reconstructed;  // at original scale
  std::size_t payloadBytes = 0;
};
// `tgt` is the cloud already at target scale. For an upscaling layer the
// source latents must parent-cover the target latents; chains get this by
// deriving each coarser layer as the floor-halved pyramid of the finer one
// (see pipeline::encodeChain), not by re-rounding the input per sf.
EncodedLayer encodeEnhancementLayer(base::BaseModels& bm, nn::ParamStore& rq,
                                    const core::PointCloud& tgt,
                                    const core::SparseTensor& ySrcGlobal,
                                    const LayerConfig& cfg, int bs);

struct DecodedLayer {
  core::SparseTensor yHatGlobal;
  core::PointCloud reconstructed;
};
DecodedLayer decodeEnhancementLayer(base::BaseModels& bm, nn::ParamStore& rq,
                                    const std::vector<EnhancementRecord>& records,
                                    const core::SparseTensor& ySrcGlobal,
                                    const LayerConfig& cfg, int bs);

// All (qp_s, qp_t, up) tuples permitted by the chain constraints.
struct ParamTuple {
  int qpS = 1, qpT = 1;
  bool up = false;
};
std::vector<ParamTuple> validParamTuples();

// Decoded latents for one cloud at every (qp, sf) operating point.
struct LatentStore {
  // key = (qp-1) + 5 * sfIndex with sf in {1,2,4} -> sfIndex 0..2
  std::array<core::SparseTensor, 15> yHat;         // decoded latents
  std::array<core::SparseTensor, 15> yRaw;         // pre-quantization latents
  static std::size_t slot(int qp, int sf);
};
LatentStore buildLatentStore(base::BaseModels& bm, const core::PointCloud& pc, int bs);

struct RqulpeTrainConfig {
  int epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  int plateauEpochs = 7;   // lr x0.1 after this many stagnant validation epochs
  int earlyStopEpochs = 10;
  int stepsPerEpoch = 16;
};
nn::ParamStore trainRqulpe(base::BaseModels& bm, const std::vector<LatentStore>& train,
                           const std::vector<LatentStore>& val, const RqulpeTrainConfig& cfg,
                           std::ostream* log = nullptr);

}  // namespace spcc::srqh
