#include "spcc/srqh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace spcc::srqh {

using core::CodingConfig;
using core::CoordList;
using core::PointCloud;
using core::SparseTensor;
using core::VoxelCoord;
using nn::ParamStore;
using nn::SparseVar;
using nn::Tape;

std::vector<LayerConfig> validateLayerChain(const std::vector<CodingConfig>& chain) {
  if (chain.empty()) throw std::invalid_argument("validateLayerChain: empty chain");
  for (const auto& c : chain) core::validateConfig(c);
  std::vector<LayerConfig> out;
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    const CodingConfig& s = chain[i];
    const CodingConfig& t = chain[i + 1];
    std::ostringstream pair;
    pair << "layer " << i << "->" << i + 1 << " (qp " << s.qp << "->" << t.qp << ", sf " << s.sf
         << "->" << t.sf << ")";
    if (s.sf != t.sf && s.sf != 2 * t.sf)
      throw std::invalid_argument("validateLayerChain: " + pair.str() +
                                  ": sf ratio must be 1 or 2");
    if (s.qp > t.qp + 1)
      throw std::invalid_argument("validateLayerChain: " + pair.str() +
                                  ": qp_s must be <= qp_t + 1");
    out.push_back({s, t, s.sf == 2 * t.sf});
  }
  return out;
}

std::vector<ParamTuple> validParamTuples() {
  std::vector<ParamTuple> out;
  for (int qpT = 1; qpT <= 5; ++qpT)
    for (int qpS = 1; qpS <= qpT + 1 && qpS <= 5; ++qpS)
      for (int up = 0; up <= 1; ++up) out.push_back({qpS, qpT, up != 0});
  return out;
}

namespace {

Mat oneHotQp(int qp) {
  if (qp < 1 || qp > 5) throw std::invalid_argument("one-hot: qp must be in 1..5");
  Mat m(1, 5);
  m.at(0, std::size_t(qp - 1)) = 1.0;
  return m;
}

Tape::Var embedGraph(Tape& t, ParamStore& p, int qpS, int qpT, bool up) {
  Mat oh(1, 11);
  oh.at(0, std::size_t(qpS - 1)) = 1.0;
  oh.at(0, std::size_t(5 + qpT - 1)) = 1.0;
  oh.at(0, 10) = up ? 1.0 : 0.0;
  return nn::mlp(t, p, "rf.emb", t.input(std::move(oh)), {11, kEmbedDim, kEmbedDim});
}

// RQuLPE-C body: qp embedding concat, two 3^3 convs, deconv to the 8 children,
// Inception-ResNet block, sigmoid head.
SparseVar rqulpeCGraph(Tape& t, ParamStore& p, const SparseVar& src, int qpS) {
  const std::size_t n = src.coords.size();
  Tape::Var emb = nn::mlp(t, p, "rc.emb", t.input(oneHotQp(qpS)), {5, kEmbedDim, kEmbedDim});
  SparseVar h{src.coords, t.concatCols(src.features, t.repeatRow(emb, n))};
  h = nn::sparseConv(t, p, "rc.c1", h, {3, 1, base::kLatentCh + kEmbedDim, base::kLatentCh, false});
  h.features = t.relu(h.features);
  h = nn::sparseConv(t, p, "rc.c2", h, {3, 1, base::kLatentCh, base::kLatentCh, false});
  h.features = t.relu(h.features);
  h = nn::sparseConv(t, p, "rc.up", h, {2, 2, base::kLatentCh, base::kLatentCh, true});
  h.features = t.relu(h.features);
  h = nn::inceptionResBlock(t, p, "rc.irb", h, base::kLatentCh);
  return {h.coords, t.sigmoid(nn::linear(t, p, "rc.h", h.features, base::kLatentCh, 1))};
}

struct FOut {
  Tape::Var mu = -1;
  Tape::Var sigma = -1;
};
FOut rqulpeFGraph(Tape& t, ParamStore& p, const SparseTensor& src, const CoordList& yTC,
                  int qpS, int qpT, bool up) {
  if (src.empty()) throw std::invalid_argument("rqulpeF: empty source latents");
  if (yTC.empty()) throw std::invalid_argument("rqulpeF: empty target coords");
  const CoordList lifted = up ? core::upscaleCoords(src.coords, 2) : src.coords;
  SparseTensor coarse = coarseEstimate(src, yTC, up);

  Tape::Var emb = embedGraph(t, p, qpS, qpT, up);
  Tape::Var srcF = t.concatCols(t.input(src.features), t.repeatRow(emb, src.size()));
  Tape::Var coarseF = t.input(coarse.features);
  Tape::Var tgtF = t.concatCols(coarseF, t.repeatRow(emb, yTC.size()));

  SparseVar a{lifted, srcF};
  SparseVar b{yTC, tgtF};
  b = nn::vectorAttention(t, p, "rf.cross", a, b, kAttnWidth, kAttnDim, kNeighbors);
  b = nn::vectorAttention(t, p, "rf.self1", b, b, kAttnWidth, kAttnDim, kNeighbors);
  b = nn::vectorAttention(t, p, "rf.self2", b, b, kAttnWidth, kAttnDim, kNeighbors);

  Tape::Var head = nn::linear(t, p, "rf.head", b.features, kAttnWidth, 2 * base::kLatentCh);
  FOut out;
  // mu is a learned correction on the coarse estimate.
  out.mu = t.add(coarseF, t.sliceCols(head, 0, base::kLatentCh));
  out.sigma = t.softplusFloor(t.sliceCols(head, base::kLatentCh, 2 * base::kLatentCh),
                              entropy::kSigmaMin);
  return out;
}

// Membership labels without the coverage requirement (training tolerates
// targets outside the candidate set; coding uses core::occupancyLabels).
std::vector<std::uint8_t> membershipLabels(const CoordList& candidates, const CoordList& target) {
  std::vector<std::uint8_t> labels(candidates.size(), 0);
  std::size_t j = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    while (j < target.size() && target[j] < candidates[i]) ++j;
    if (j < target.size() && target[j] == candidates[i]) labels[i] = 1;
  }
  return labels;
}

std::vector<entropy::CdfTable> bernoulliCdfs(const Mat& probs) {
  std::vector<entropy::CdfTable> tables;
  tables.reserve(probs.rows);
  for (std::size_t i = 0; i < probs.rows; ++i)
    tables.push_back(entropy::buildBernoulliCdf(probs.at(i, 0)));
  return tables;
}

std::vector<const entropy::CdfTable*> cdfPtrs(const std::vector<entropy::CdfTable>& v) {
  std::vector<const entropy::CdfTable*> p;
  p.reserve(v.size());
  for (const auto& c : v) p.push_back(&c);
  return p;
}

}  // namespace

SparseTensor rqulpeCForward(ParamStore& p, const SparseTensor& ySrcHat, int qpS) {
  if (ySrcHat.empty()) throw std::invalid_argument("rqulpeCForward: empty source latents");
  Tape t;
  SparseVar src{ySrcHat.coords, t.input(ySrcHat.features)};
  SparseVar probs = rqulpeCGraph(t, p, src, qpS);
  return SparseTensor(probs.coords, t.value(probs.features));
}

entropy::RansStream encodeCoordEnhancement(ParamStore& p, const SparseTensor& ySrcHat, int qpS,
                                           const CoordList& yTC) {
  SparseTensor probs = rqulpeCForward(p, ySrcHat, qpS);
  const auto labels = core::occupancyLabels(probs.coords, yTC);
  std::vector<int> syms(labels.begin(), labels.end());
  const auto tables = bernoulliCdfs(probs.features);
  return entropy::ransEncode(syms, cdfPtrs(tables));
}

CoordList decodeCoordEnhancement(ParamStore& p, const SparseTensor& ySrcHat, int qpS,
                                 const entropy::RansStream& stream) {
  SparseTensor probs = rqulpeCForward(p, ySrcHat, qpS);
  const auto tables = bernoulliCdfs(probs.features);
  const auto syms = entropy::ransDecode(stream, cdfPtrs(tables));
  CoordList out;
  for (std::size_t i = 0; i < syms.size(); ++i)
    if (syms[i]) out.push_back(probs.coords[i]);
  return out;
}

SparseTensor coarseEstimate(const SparseTensor& ySrcHat, const CoordList& yTC, bool up) {
  if (ySrcHat.empty()) throw std::invalid_argument("coarseEstimate: empty source latents");
  const CoordList refs = up ? core::upscaleCoords(ySrcHat.coords, 2) : ySrcHat.coords;
  const auto nbr = core::knn(yTC, refs, kNeighbors);
  Mat est(yTC.size(), ySrcHat.channels());
  for (std::size_t i = 0; i < yTC.size(); ++i) {
    for (int j = 0; j < kNeighbors; ++j) {
      const double* row = ySrcHat.features.row(std::size_t(nbr[i * kNeighbors + std::size_t(j)]));
      for (std::size_t c = 0; c < est.cols; ++c) est.at(i, c) += row[c];
    }
    for (std::size_t c = 0; c < est.cols; ++c) est.at(i, c) /= double(kNeighbors);
  }
  return SparseTensor(yTC, std::move(est));
}

Mat embedParams(ParamStore& p, int qpS, int qpT, bool up) {
  if (qpS < 1 || qpS > 5 || qpT < 1 || qpT > 5)
    throw std::invalid_argument("embedParams: qp must be in 1..5");
  Tape t;
  return t.value(embedGraph(t, p, qpS, qpT, up));
}

entropy::GaussianParams rqulpeFForward(ParamStore& p, const SparseTensor& ySrcHat,
                                       const CoordList& yTC, int qpS, int qpT, bool up) {
  Tape t;
  FOut f = rqulpeFGraph(t, p, ySrcHat, yTC, qpS, qpT, up);
  entropy::GaussianParams gp;
  gp.mu = t.value(f.mu).d;
  gp.sigma = t.value(f.sigma).d;
  return gp;
}

namespace {

struct BlockGroup {
  std::uint64_t blockId = 0;
  VoxelCoord origin;               // target-scale voxel origin
  SparseTensor src;                // source latents whose (lifted) coords fall in range
  CoordList tgtVoxels;             // encoder only: target-scale points in block
};

// Source latents regrouped by target-block latent ranges.
std::vector<std::size_t> rowsInRange(const SparseTensor& src, const VoxelCoord& latLo,
                                     std::int32_t span, bool up) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < src.size(); ++i) {
    VoxelCoord c = src.coords[i];
    if (up) c = {2 * c.x, 2 * c.y, 2 * c.z};
    if (c.x >= latLo.x && c.x < latLo.x + span && c.y >= latLo.y && c.y < latLo.y + span &&
        c.z >= latLo.z && c.z < latLo.z + span)
      rows.push_back(i);
  }
  return rows;
}

SparseTensor selectRows(const SparseTensor& src, const std::vector<std::size_t>& rows) {
  CoordList coords;
  Mat feats(rows.size(), src.channels());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    coords.push_back(src.coords[rows[i]]);
    std::copy(src.features.row(rows[i]), src.features.row(rows[i]) + src.channels(),
              feats.row(i));
  }
  return SparseTensor(std::move(coords), std::move(feats));
}

void appendGlobal(std::vector<std::pair<std::uint64_t, std::vector<double>>>& rows,
                  const SparseTensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i)
    rows.emplace_back(core::packCoord(t.coords[i]),
                      std::vector<double>(t.features.row(i), t.features.row(i) + t.channels()));
}

SparseTensor finishGlobal(std::vector<std::pair<std::uint64_t, std::vector<double>>>& rows,
                          std::size_t ch) {
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  CoordList coords;
  Mat feats(rows.size(), ch);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    coords.push_back(core::unpackCoord(rows[i].first));
    std::copy(rows[i].second.begin(), rows[i].second.end(), feats.row(i));
  }
  return SparseTensor(std::move(coords), std::move(feats));
}

CoordList offsetCoords(const CoordList& coords, const VoxelCoord& off) {
  CoordList out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back({c.x + off.x, c.y + off.y, c.z + off.z});
  return out;
}

}  // namespace

EncodedLayer encodeEnhancementLayer(base::BaseModels& bm, ParamStore& rq, const PointCloud& tgt,
                                    const SparseTensor& ySrcGlobal, const LayerConfig& cfg,
                                    int bs) {
  EncodedLayer out;
  const std::int32_t span = bs / base::kStride;
  ParamStore& pb = bm.at(cfg.target.qp);
  std::vector<std::pair<std::uint64_t, std::vector<double>>> latentRows;
  CoordList allSelected;

  for (const auto& b : core::splitBlocks(tgt, bs)) {
    const VoxelCoord latLo{b.origin.x / base::kStride, b.origin.y / base::kStride,
                           b.origin.z / base::kStride};
    SparseTensor src = selectRows(ySrcGlobal, rowsInRange(ySrcGlobal, latLo, span, cfg.up));

    // Target latents from the base analysis transform, in global coordinates.
    SparseTensor yT = base::analysis(
        pb, SparseTensor(b.tensor.coords, Mat(b.tensor.size(), 1, 1.0)));
    const CoordList yTCglobal = offsetCoords(yT.coords, latLo);

    EnhancementRecord rec;
    rec.blockId = b.index;
    rec.origin = b.origin;
    rec.hasCoords = cfg.up;
    if (cfg.up) {
      rec.coordsStream = encodeCoordEnhancement(rq, src, cfg.source.qp, yTCglobal);
    } else if (src.coords != yTCglobal) {
      throw std::invalid_argument(
          "encodeEnhancementLayer: structural mismatch between source and target latents");
    }

    const auto gp = rqulpeFForward(rq, src, yTCglobal, cfg.source.qp, cfg.target.qp, cfg.up);
    const auto r = entropy::quantizeResiduals(yT.features.d, gp.mu);
    std::vector<entropy::CdfTable> tables;
    tables.reserve(gp.mu.size());
    for (std::size_t i = 0; i < gp.mu.size(); ++i)
      tables.push_back(entropy::buildGaussianCdf(gp.mu[i], gp.sigma[i]));
    rec.latentStream = entropy::ransEncode(r, cdfPtrs(tables));

    Mat yHatM(yTCglobal.size(), base::kLatentCh);
    yHatM.d = entropy::dequantize(gp.mu, r);
    SparseTensor yHat(yTCglobal, std::move(yHatM));

    const CoordList tgtGlobal = offsetCoords(b.tensor.coords, b.origin);
    SparseTensor probs0 = base::synthesis(pb, yHat, tgtGlobal.size());
    const std::size_t k = base::optimizeK(probs0, tgtGlobal);
    SparseTensor probs = base::synthesis(pb, yHat, k);
    rec.k = std::uint32_t(k);
    CoordList selected = core::topKSelect(probs, std::min(k, probs.size()));
    allSelected.insert(allSelected.end(), selected.begin(), selected.end());

    out.payloadBytes += 8 + 12 + 4 + 1 +
                        (cfg.up ? entropy::streamSizeBytes(rec.coordsStream) : 0) +
                        entropy::streamSizeBytes(rec.latentStream);
    appendGlobal(latentRows, yHat);
    out.records.push_back(std::move(rec));
  }
  out.yHatGlobal = finishGlobal(latentRows, base::kLatentCh);
  core::canonicalize(allSelected);
  out.reconstructed.points = core::upscaleCoords(allSelected, cfg.target.sf);
  return out;
}

DecodedLayer decodeEnhancementLayer(base::BaseModels& bm, ParamStore& rq,
                                    const std::vector<EnhancementRecord>& records,
                                    const SparseTensor& ySrcGlobal, const LayerConfig& cfg,
                                    int bs) {
  DecodedLayer out;
  const std::int32_t span = bs / base::kStride;
  ParamStore& pb = bm.at(cfg.target.qp);
  std::vector<std::pair<std::uint64_t, std::vector<double>>> latentRows;
  CoordList allSelected;

  for (const auto& rec : records) {
    const VoxelCoord latLo{rec.origin.x / base::kStride, rec.origin.y / base::kStride,
                           rec.origin.z / base::kStride};
    SparseTensor src = selectRows(ySrcGlobal, rowsInRange(ySrcGlobal, latLo, span, cfg.up));

    CoordList yTC;
    if (cfg.up) {
      if (!rec.hasCoords)
        throw std::invalid_argument("decodeEnhancementLayer: missing coords stream");
      yTC = decodeCoordEnhancement(rq, src, cfg.source.qp, rec.coordsStream);
    } else {
      yTC = src.coords;
    }

    const auto gp = rqulpeFForward(rq, src, yTC, cfg.source.qp, cfg.target.qp, cfg.up);
    std::vector<entropy::CdfTable> tables;
    tables.reserve(gp.mu.size());
    for (std::size_t i = 0; i < gp.mu.size(); ++i)
      tables.push_back(entropy::buildGaussianCdf(gp.mu[i], gp.sigma[i]));
    const auto r = entropy::ransDecode(rec.latentStream, cdfPtrs(tables));

    Mat yHatM(yTC.size(), base::kLatentCh);
    yHatM.d = entropy::dequantize(gp.mu, r);
    SparseTensor yHat(yTC, std::move(yHatM));

    SparseTensor probs = base::synthesis(pb, yHat, rec.k);
    CoordList selected =
        core::topKSelect(probs, std::min<std::size_t>(rec.k, probs.size()));
    allSelected.insert(allSelected.end(), selected.begin(), selected.end());
    appendGlobal(latentRows, yHat);
  }
  out.yHatGlobal = finishGlobal(latentRows, base::kLatentCh);
  core::canonicalize(allSelected);
  out.reconstructed.points = core::upscaleCoords(allSelected, cfg.target.sf);
  return out;
}

std::size_t LatentStore::slot(int qp, int sf) {
  int sfIndex;
  switch (sf) {
    case 1: sfIndex = 0; break;
    case 2: sfIndex = 1; break;
    case 4: sfIndex = 2; break;
    default: throw std::invalid_argument("LatentStore: sf must be 1, 2, or 4");
  }
  if (qp < 1 || qp > 5) throw std::invalid_argument("LatentStore: qp must be in 1..5");
  return std::size_t(qp - 1) + 5 * std::size_t(sfIndex);
}

LatentStore buildLatentStore(base::BaseModels& bm, const PointCloud& pc, int bs) {
  LatentStore store;
  for (int sf : {1, 2, 4}) {
    for (int qp = 1; qp <= 5; ++qp) {
      auto enc = base::encodeCloudBase(bm.at(qp), pc, sf, bs);
      store.yHat[LatentStore::slot(qp, sf)] = std::move(enc.yHatGlobal);
      store.yRaw[LatentStore::slot(qp, sf)] = std::move(enc.yRawGlobal);
    }
  }
  return store;
}

namespace {

struct SampleCombo {
  ParamTuple tuple;
  int sfS = 1, sfT = 1;
};

std::vector<SampleCombo> allCombos() {
  std::vector<SampleCombo> out;
  for (const auto& t : validParamTuples()) {
    if (t.up) {
      out.push_back({t, 2, 1});
      out.push_back({t, 4, 2});
    } else {
      out.push_back({t, 1, 1});
      out.push_back({t, 2, 2});
      out.push_back({t, 4, 4});
    }
  }
  return out;
}

struct SampleLoss {
  double coordBits = 0.0;  // per-candidate cross-entropy (up only)
  double featBits = 0.0;   // per-coefficient Gaussian bits
  double loss = 0.0;
  bool valid = false;
};

SampleLoss sampleLoss(ParamStore& p, const LatentStore& ls, const SampleCombo& sc,
                      bool backward) {
  SampleLoss out;
  const SparseTensor& src = ls.yHat[LatentStore::slot(sc.tuple.qpS, sc.sfS)];
  const SparseTensor& tgtRaw = ls.yRaw[LatentStore::slot(sc.tuple.qpT, sc.sfT)];
  if (src.empty() || tgtRaw.empty()) return out;

  double total = 0.0;
  if (sc.tuple.up) {
    Tape t;
    SparseVar sv{src.coords, t.input(src.features)};
    SparseVar probs = rqulpeCGraph(t, p, sv, sc.tuple.qpS);
    auto labels = membershipLabels(probs.coords, tgtRaw.coords);
    // Plain cross-entropy (focal with gamma=0, alpha=0.5, rescaled).
    Tape::Var ce = t.scale(t.focalLoss(probs.features, std::move(labels), 0.5, 0.0), 2.0);
    out.coordBits = t.value(ce).d[0] / std::log(2.0);
    total += t.value(ce).d[0];
    if (backward) t.backward(ce);
  }
  {
    Tape t;
    FOut f = rqulpeFGraph(t, p, src, tgtRaw.coords, sc.tuple.qpS, sc.tuple.qpT, sc.tuple.up);
    Tape::Var bits = t.gaussianNllBits(t.input(tgtRaw.features), f.mu, f.sigma);
    Tape::Var perCoeff = t.scale(bits, 1.0 / double(tgtRaw.features.size()));
    out.featBits = t.value(perCoeff).d[0];
    total += t.value(perCoeff).d[0];
    if (backward) t.backward(perCoeff);
  }
  out.loss = total;
  out.valid = true;
  if (!std::isfinite(total)) throw std::runtime_error("trainRqulpe: loss diverged (NaN/inf)");
  return out;
}

}  // namespace

ParamStore trainRqulpe(base::BaseModels& bm, const std::vector<LatentStore>& train,
                       const std::vector<LatentStore>& val, const RqulpeTrainConfig& cfg,
                       std::ostream* log) {
  (void)bm;
  if (train.empty()) throw std::invalid_argument("trainRqulpe: empty training set");
  ParamStore p;
  p.rngSeed = cfg.seed;
  p.metadata["kind"] = "rqulpe";
  p.metadata["self_attention_layers"] = "2";
  p.metadata["embed_dim"] = std::to_string(kEmbedDim);

  const auto combos = allCombos();
  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedull);
  std::uniform_int_distribution<std::size_t> comboDist(0, combos.size() - 1);
  std::uniform_int_distribution<std::size_t> cloudDist(0, train.size() - 1);

  double lr = cfg.lr;
  double bestVal = std::numeric_limits<double>::infinity();
  int stagnant = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double trainSum = 0.0;
    int trainCount = 0;
    for (int step = 0; step < cfg.stepsPerEpoch; ++step) {
      const auto& ls = train[cloudDist(rng)];
      const auto& sc = combos[comboDist(rng)];
      p.zeroGrad();
      auto sl = sampleLoss(p, ls, sc, true);
      if (!sl.valid) continue;
      nn::adamStep(p, lr);
      trainSum += sl.loss;
      ++trainCount;
    }

    // Exhaustive validation sweep over every parameter combination.
    double valSum = 0.0;
    int valCount = 0;
    for (const auto& ls : val) {
      for (const auto& sc : combos) {
        auto sl = sampleLoss(p, ls, sc, false);
        if (!sl.valid) continue;
        valSum += sl.loss;
        ++valCount;
      }
    }
    const double valLoss = valCount ? valSum / double(valCount) : 0.0;
    if (log)
      *log << "rqulpe,epoch=" << epoch << ",loss="
           << (trainCount ? trainSum / double(trainCount) : 0.0) << ",val=" << valLoss
           << ",lr=" << lr << "\n";

    if (valLoss < bestVal - 1e-9) {
      bestVal = valLoss;
      stagnant = 0;
    } else {
      ++stagnant;
      if (stagnant >= cfg.earlyStopEpochs) break;
      if (stagnant == cfg.plateauEpochs) lr *= 0.1;
    }
  }
  return p;
}

}  // namespace spcc::srqh
