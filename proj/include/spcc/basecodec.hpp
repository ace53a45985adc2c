#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>

#include "spcc/core.hpp"
#include "spcc/entropy.hpp"
#include "spcc/nn/layers.hpp"
#include "spcc/octree.hpp"

namespace spcc::base {

// Toy architecture widths: G_a 1->16->32->32 (total stride 8), HG 32->16->16
// (factor 4), G_s mirrors G_a with generative deconvs.
constexpr std::size_t kLatentCh = 32;
constexpr std::size_t kHyperCh = 16;
constexpr int kStride = 8;

double lambdaForQp(int qp);  // qp 1..5 -> {0.05, 0.025, 0.01, 0.005, 0.0025}

struct BlockRecord {
  std::uint64_t blockId = 0;
  core::VoxelCoord origin;  // multiple of the block size, at the coded scale
  std::uint32_t k = 1;
  octree::OctreeStream coordsStream;
  entropy::RansStream hyperStream;
  entropy::RansStream latentStream;
};

struct BaseModels {
  std::array<nn::ParamStore, 5> qp;  // index qp-1

  nn::ParamStore& at(int q) { return qp.at(std::size_t(q - 1)); }
  const nn::ParamStore& at(int q) const { return qp.at(std::size_t(q - 1)); }

  void save(const std::string& prefix) const;  // prefix + ".qpN.spcw"
  static BaseModels load(const std::string& prefix);
};

// Forward passes shared by encoder, decoder, and trainer. All run the same
// graphs on the same weights, so both sides produce bit-identical tensors.
core::SparseTensor analysis(nn::ParamStore& p, const core::SparseTensor& x);
core::SparseTensor hyperAnalysis(nn::ParamStore& p, const core::SparseTensor& y);
// (mu, sigma) on exactly yCoords, row-major over (row, channel).
entropy::GaussianParams hyperSynthesis(nn::ParamStore& p, const core::SparseTensor& zHat,
                                       const core::CoordList& yCoords);
// Occupancy probabilities after three generative deconv stages. Intermediate
// stages keep the top 2*n_i candidates by the auxiliary heads, where n_i
// geometrically interpolates between |yHat| and kHint; the final stage stays
// dense. Deterministic in (yHat, kHint), so encoder and decoder agree.
core::SparseTensor synthesis(nn::ParamStore& p, const core::SparseTensor& yHat,
                             std::size_t kHint);

// Per-channel factorized-prior tables from the learned histogram logits.
std::vector<entropy::CdfTable> factorizedPriorCdfs(nn::ParamStore& p);

std::size_t optimizeK(const core::SparseTensor& probs, const core::CoordList& original);

struct EncodedBlock {
  BlockRecord rec;
  core::SparseTensor yHat;       // decoded-side latents (mu + r), for SRQH
  core::SparseTensor yRaw;       // analysis output before quantization
  core::CoordList reconstructed; // top-k selection, block-local coords
};
EncodedBlock encodeBlockBase(nn::ParamStore& p, const core::Block& block, int bs);

struct DecodedBlock {
  core::SparseTensor probs;
  core::CoordList selected;  // block-local coords
  core::SparseTensor yHat;
};
DecodedBlock decodeBlockBase(nn::ParamStore& p, const BlockRecord& rec, int bs);

// Full-cloud convenience: downscale by cfg.sf, split into bs-blocks, code each
// block, and merge/upscale on decode.
struct EncodedCloud {
  std::vector<BlockRecord> records;
  core::SparseTensor yHatGlobal;  // latents in global (downscaled/8) coords
  core::SparseTensor yRawGlobal;  // pre-quantization analysis output, same coords
  core::PointCloud reconstructed; // at original scale
  std::size_t payloadBytes = 0;
};
EncodedCloud encodeCloudBase(nn::ParamStore& p, const core::PointCloud& pc, int sf, int bs);

// Same pipeline, but `scaled` is already at the coded scale; sf is only used
// to upscale the reconstruction. Lets callers pick their own downscale rule.
EncodedCloud encodeCloudBaseScaled(nn::ParamStore& p, const core::PointCloud& scaled, int sf,
                                   int bs);

struct DecodedCloud {
  core::SparseTensor yHatGlobal;
  core::PointCloud reconstructed;
};
DecodedCloud decodeCloudBase(nn::ParamStore& p, const std::vector<BlockRecord>& records,
                             int sf, int bs);

struct TrainConfig {
  int epochs = 10;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  bool independent = false;  // retrain each qp from fresh seeds (Fig. 2c mode)
  int bs = 64;
};

// Per-block loss terms for one forward/backward pass; used by the trainer and
// by tests that freeze the loss decomposition.
struct TrainStats {
  double focal = 0.0;
  double bitsY = 0.0;
  double bitsZ = 0.0;
  double loss = 0.0;
};
TrainStats trainStepBase(nn::ParamStore& p, const core::Block& block, double lambda,
                         bool backward);

BaseModels trainSequential(const std::vector<core::Block>& corpus, const TrainConfig& cfg,
                           std::ostream* log = nullptr);

}  // namespace spcc::base
