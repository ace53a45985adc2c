#include "spcc/basecodec.hpp"

#include <cmath>
#include <ostream>
#include <unordered_map>

namespace spcc::base {

using core::Block;
using core::CoordList;
using core::PointCloud;
using core::SparseTensor;
using core::VoxelCoord;
using nn::ParamStore;
using nn::SparseVar;
using nn::Tape;

double lambdaForQp(int qp) {
  static constexpr double table[5] = {0.05, 0.025, 0.01, 0.005, 0.0025};
  if (qp < 1 || qp > 5) throw std::invalid_argument("lambdaForQp: qp must be in 1..5");
  return table[qp - 1];
}

void BaseModels::save(const std::string& prefix) const {
  for (int q = 1; q <= 5; ++q) at(q).save(prefix + ".qp" + std::to_string(q) + ".spcw");
}

BaseModels BaseModels::load(const std::string& prefix) {
  BaseModels m;
  for (int q = 1; q <= 5; ++q)
    m.at(q) = ParamStore::load(prefix + ".qp" + std::to_string(q) + ".spcw");
  return m;
}

namespace {

constexpr std::size_t kFpBins =
    std::size_t(entropy::kSupportMax - entropy::kSupportMin + 1);  // 256

SparseVar gaGraph(Tape& t, ParamStore& p, const SparseVar& x) {
  SparseVar h = nn::sparseConv(t, p, "ga.c1", x, {3, 2, 1, 16, false});
  h.features = t.relu(h.features);
  h = nn::inceptionResBlock(t, p, "ga.r1", h, 16);
  h = nn::sparseConv(t, p, "ga.c2", h, {3, 2, 16, kLatentCh, false});
  h.features = t.relu(h.features);
  h = nn::inceptionResBlock(t, p, "ga.r2", h, kLatentCh);
  h = nn::sparseConv(t, p, "ga.c3", h, {3, 2, kLatentCh, kLatentCh, false});
  h = nn::inceptionResBlock(t, p, "ga.r3", h, kLatentCh);
  return h;
}

SparseVar haGraph(Tape& t, ParamStore& p, const SparseVar& y) {
  SparseVar h = nn::sparseConv(t, p, "ha.c1", y, {3, 2, kLatentCh, kHyperCh, false});
  h.features = t.relu(h.features);
  h = nn::sparseConv(t, p, "ha.c2", h, {3, 2, kHyperCh, kHyperCh, false});
  return h;
}

// Restrict a sparse var to a sorted subset of its coordinates.
SparseVar pruneTo(Tape& t, const SparseVar& x, const CoordList& keep) {
  std::unordered_map<std::uint64_t, std::int32_t> index;
  index.reserve(x.coords.size() * 2);
  for (std::size_t i = 0; i < x.coords.size(); ++i)
    index.emplace(core::packCoord(x.coords[i]), std::int32_t(i));
  std::vector<std::int32_t> rows;
  rows.reserve(keep.size());
  for (const auto& c : keep) {
    auto it = index.find(core::packCoord(c));
    if (it == index.end()) throw std::logic_error("pruneTo: coordinate not covered");
    rows.push_back(it->second);
  }
  return {keep, t.gatherRows(x.features, std::move(rows))};
}

// One hyper-synthesis head: two generative deconvs pruned to the known
// coordinate chain of y (floor division keeps encoder/decoder coords equal).
Tape::Var hsHead(Tape& t, ParamStore& p, const std::string& prefix, const SparseVar& z,
                 const CoordList& yCoords) {
  const CoordList mid = core::downscaleFloor(yCoords, 2);
  SparseVar h = nn::sparseConv(t, p, prefix + ".d1", z, {2, 2, kHyperCh, kHyperCh, true});
  h.features = t.relu(h.features);
  h = pruneTo(t, h, mid);
  h = nn::sparseConv(t, p, prefix + ".d2", h, {2, 2, kHyperCh, kLatentCh, true});
  h = pruneTo(t, h, yCoords);
  return h.features;
}

struct HsOut {
  Tape::Var mu;
  Tape::Var sigma;
};
HsOut hsGraph(Tape& t, ParamStore& p, const SparseVar& z, const CoordList& yCoords) {
  Tape::Var mu = hsHead(t, p, "hsm", z, yCoords);
  Tape::Var sigma = t.softplusFloor(hsHead(t, p, "hss", z, yCoords), entropy::kSigmaMin);
  return {mu, sigma};
}

std::size_t interpCount(std::size_t ny, std::size_t k, int stage) {
  const double f = double(stage) / 3.0;
  const double n = std::pow(double(ny), 1.0 - f) * std::pow(double(std::max<std::size_t>(k, 1)), f);
  return std::max<std::size_t>(1, std::size_t(std::llround(n)));
}

// Keep the top `budget` candidates by single-channel probability (ties to the
// lexicographically smaller coordinate), preserving coordinate order.
SparseVar keepTop(Tape& t, const SparseVar& x, Tape::Var probs, std::size_t budget) {
  const Mat& pm = t.value(probs);
  if (budget >= x.coords.size()) return x;
  SparseTensor tensor(x.coords, pm);
  CoordList kept = core::topKSelect(tensor, budget);
  return pruneTo(t, x, kept);
}

struct GsOut {
  SparseVar probs;             // final-stage candidates with sigmoid prob feature
  Tape::Var aux1 = -1, aux2 = -1;
  CoordList cand1, cand2;      // candidate coords at intermediate stages
};

// Generative synthesis. When `guide` is non-null the intermediate stages are
// pruned to the ground-truth occupied sets (training); otherwise the top
// 2*n_i candidates by the auxiliary heads survive (coding).
GsOut gsGraph(Tape& t, ParamStore& p, const SparseVar& yHat, std::size_t kHint,
              const CoordList* guide) {
  const std::size_t ny = yHat.coords.size();
  GsOut out;

  SparseVar u = nn::sparseConv(t, p, "gs.d1", yHat, {2, 2, kLatentCh, kLatentCh, true});
  u.features = t.relu(u.features);
  Tape::Var a1 = t.sigmoid(nn::linear(t, p, "gs.a1", u.features, kLatentCh, 1));
  out.aux1 = a1;
  out.cand1 = u.coords;
  if (guide) {
    u = pruneTo(t, u, core::downscaleFloor(*guide, 4));
  } else {
    u = keepTop(t, u, a1, 2 * interpCount(ny, kHint, 1));
  }

  u = nn::sparseConv(t, p, "gs.d2", u, {2, 2, kLatentCh, kHyperCh, true});
  u.features = t.relu(u.features);
  Tape::Var a2 = t.sigmoid(nn::linear(t, p, "gs.a2", u.features, kHyperCh, 1));
  out.aux2 = a2;
  out.cand2 = u.coords;
  if (guide) {
    u = pruneTo(t, u, core::downscaleFloor(*guide, 2));
  } else {
    u = keepTop(t, u, a2, 2 * interpCount(ny, kHint, 2));
  }

  u = nn::sparseConv(t, p, "gs.d3", u, {2, 2, kHyperCh, kHyperCh, true});
  u.features = t.relu(u.features);
  Tape::Var head = t.sigmoid(nn::linear(t, p, "gs.h", u.features, kHyperCh, 1));
  out.probs = {u.coords, head};
  return out;
}

SparseTensor toTensor(Tape& t, const SparseVar& v) { return SparseTensor(v.coords, t.value(v.features)); }

std::vector<int> roundFeatures(const Mat& m) {
  std::vector<int> syms(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) syms[i] = entropy::quantizeResidual(m.d[i], 0.0);
  return syms;
}

Mat symbolsToMat(const std::vector<int>& syms, std::size_t rows, std::size_t cols) {
  Mat m(rows, cols);
  for (std::size_t i = 0; i < syms.size(); ++i) m.d[i] = double(syms[i]);
  return m;
}

std::vector<entropy::CdfTable> gaussianCdfs(const entropy::GaussianParams& gp) {
  std::vector<entropy::CdfTable> cdfs;
  cdfs.reserve(gp.mu.size());
  for (std::size_t i = 0; i < gp.mu.size(); ++i)
    cdfs.push_back(entropy::buildGaussianCdf(gp.mu[i], gp.sigma[i]));
  return cdfs;
}

std::vector<const entropy::CdfTable*> cdfPtrs(const std::vector<entropy::CdfTable>& v) {
  std::vector<const entropy::CdfTable*> p;
  p.reserve(v.size());
  for (const auto& c : v) p.push_back(&c);
  return p;
}

// Per-channel hyper CDFs repeated across rows.
std::vector<const entropy::CdfTable*> hyperCdfPtrs(const std::vector<entropy::CdfTable>& perCh,
                                                   std::size_t rows) {
  std::vector<const entropy::CdfTable*> p;
  p.reserve(rows * perCh.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (const auto& c : perCh) p.push_back(&c);
  return p;
}

int octreeDepthFor(int bs) {
  int depth = 0;
  while ((1 << depth) * kStride < bs) ++depth;
  return std::max(depth, 1);
}

Mat onesFeatures(std::size_t n) { return Mat(n, 1, 1.0); }

}  // namespace

SparseTensor analysis(ParamStore& p, const SparseTensor& x) {
  if (x.empty()) return {};
  Tape t;
  SparseVar xv{x.coords, t.input(x.features)};
  SparseVar y = gaGraph(t, p, xv);
  return toTensor(t, y);
}

SparseTensor hyperAnalysis(ParamStore& p, const SparseTensor& y) {
  Tape t;
  SparseVar yv{y.coords, t.input(y.features)};
  return toTensor(t, haGraph(t, p, yv));
}

entropy::GaussianParams hyperSynthesis(ParamStore& p, const SparseTensor& zHat,
                                       const CoordList& yCoords) {
  Tape t;
  SparseVar zv{zHat.coords, t.input(zHat.features)};
  HsOut hs = hsGraph(t, p, zv, yCoords);
  entropy::GaussianParams gp;
  gp.mu = t.value(hs.mu).d;
  gp.sigma = t.value(hs.sigma).d;
  return gp;
}

SparseTensor synthesis(ParamStore& p, const SparseTensor& yHat, std::size_t kHint) {
  Tape t;
  SparseVar yv{yHat.coords, t.input(yHat.features)};
  GsOut gs = gsGraph(t, p, yv, kHint, nullptr);
  return toTensor(t, gs.probs);
}

std::vector<entropy::CdfTable> factorizedPriorCdfs(ParamStore& p) {
  const Mat& logits = p.ensure("fp.logits", kHyperCh, kFpBins, nn::Init::Zero);
  std::vector<entropy::CdfTable> tables;
  tables.reserve(kHyperCh);
  std::vector<double> w(kFpBins);
  for (std::size_t c = 0; c < kHyperCh; ++c) {
    double mx = logits.at(c, 0);
    for (std::size_t j = 1; j < kFpBins; ++j) mx = std::max(mx, logits.at(c, j));
    for (std::size_t j = 0; j < kFpBins; ++j) w[j] = std::exp(logits.at(c, j) - mx);
    tables.push_back(entropy::buildWeightedCdf(w, entropy::kSupportMin));
  }
  return tables;
}

std::size_t optimizeK(const SparseTensor& probs, const CoordList& original) {
  if (probs.empty()) throw std::invalid_argument("optimizeK: empty probabilities");
  if (original.empty()) throw std::invalid_argument("optimizeK: empty reference");
  const std::size_t n = probs.size();
  const std::size_t m = original.size();

  // Candidates in selection order: probability descending, lex ascending.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double pa = probs.features.at(a, 0), pb = probs.features.at(b, 0);
    if (pa != pb) return pa > pb;
    return probs.coords[a] < probs.coords[b];
  });

  auto dist2 = [](const VoxelCoord& a, const VoxelCoord& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
  };

  // d^2 from each candidate to its nearest reference point.
  auto nn1 = core::knn(probs.coords, original, 1);
  std::vector<double> candD2(n);
  for (std::size_t i = 0; i < n; ++i)
    candD2[i] = dist2(probs.coords[i], original[std::size_t(nn1[i])]);

  // Incremental sweep over k: rec->ref term is a prefix mean; ref->rec term is
  // a running per-reference minimum.
  const bool fullSweep = n <= 512;
  std::vector<std::uint8_t> evaluate(n + 1, fullSweep ? 1 : 0);
  if (!fullSweep) {
    // Geometric grid of 32 candidate k values; the winning bracket is swept
    // exhaustively in a second pass below.
    for (int j = 0; j < 32; ++j) {
      const double k = std::pow(double(n), double(j) / 31.0);
      evaluate[std::size_t(std::llround(std::max(1.0, k)))] = 1;
    }
    evaluate[n] = 1;
  }

  auto sweep = [&](const std::vector<std::uint8_t>& mask, std::size_t lo, std::size_t hi,
                   std::size_t& bestK, double& bestMse) {
    std::vector<double> refBest(m, std::numeric_limits<double>::infinity());
    double refSum = 0.0;  // recomputed below to avoid drift
    double recSum = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      const std::size_t ci = order[k - 1];
      recSum += candD2[ci];
      for (std::size_t r = 0; r < m; ++r)
        refBest[r] = std::min(refBest[r], dist2(probs.coords[ci], original[r]));
      if (k < lo || k > hi || !mask[k]) continue;
      refSum = 0.0;
      for (double v : refBest) refSum += v;
      const double mse = std::max(recSum / double(k), refSum / double(m));
      if (mse < bestMse || (mse == bestMse && k < bestK)) {
        bestMse = mse;
        bestK = k;
      }
    }
  };

  std::size_t bestK = 1;
  double bestMse = std::numeric_limits<double>::infinity();
  sweep(evaluate, 1, n, bestK, bestMse);
  if (!fullSweep) {
    // Local refinement: exhaustively sweep between the grid neighbors.
    std::size_t lo = 1, hi = n;
    for (std::size_t k = bestK; k-- > 1;)
      if (evaluate[k]) {
        lo = k;
        break;
      }
    for (std::size_t k = bestK + 1; k <= n; ++k)
      if (evaluate[k]) {
        hi = k;
        break;
      }
    std::vector<std::uint8_t> all(n + 1, 1);
    sweep(all, lo, hi, bestK, bestMse);
  }
  return bestK;
}

EncodedBlock encodeBlockBase(ParamStore& p, const Block& block, int bs) {
  if (block.tensor.empty()) throw std::invalid_argument("encodeBlockBase: empty block");
  Tape t;
  SparseVar x{block.tensor.coords, t.input(onesFeatures(block.tensor.size()))};
  SparseVar y = gaGraph(t, p, x);
  SparseVar z = haGraph(t, p, y);

  EncodedBlock out;
  out.rec.blockId = block.index;
  out.rec.origin = block.origin;
  out.rec.coordsStream = octree::encode(y.coords, octreeDepthFor(bs));

  // Hyper-latents under the factorized prior.
  const auto zSyms = roundFeatures(t.value(z.features));
  const auto fpTables = factorizedPriorCdfs(p);
  out.rec.hyperStream = entropy::ransEncode(zSyms, hyperCdfPtrs(fpTables, z.coords.size()));

  // Gaussian parameters from the quantized hyper-latents.
  SparseTensor zHat(z.coords, symbolsToMat(zSyms, z.coords.size(), kHyperCh));
  const auto gp = hyperSynthesis(p, zHat, y.coords);

  const Mat& yF = t.value(y.features);
  const auto r = entropy::quantizeResiduals(yF.d, gp.mu);
  const auto latentTables = gaussianCdfs(gp);
  out.rec.latentStream = entropy::ransEncode(r, cdfPtrs(latentTables));

  const auto yHatF = entropy::dequantize(gp.mu, r);
  Mat yHatM(y.coords.size(), kLatentCh);
  yHatM.d = yHatF;
  out.yHat = SparseTensor(y.coords, std::move(yHatM));
  out.yRaw = SparseTensor(y.coords, yF);

  // First pass sizes the pruning budgets from the true occupancy; the second
  // pass re-runs synthesis exactly as the decoder will, keyed on the stored k.
  SparseTensor probs0 = synthesis(p, out.yHat, block.tensor.size());
  std::size_t k = optimizeK(probs0, block.tensor.coords);
  SparseTensor probs = synthesis(p, out.yHat, k);
  out.rec.k = std::uint32_t(k);
  out.reconstructed = core::topKSelect(probs, std::min(k, probs.size()));
  return out;
}

DecodedBlock decodeBlockBase(ParamStore& p, const BlockRecord& rec, int bs) {
  DecodedBlock out;
  const CoordList yCoords = octree::decode(rec.coordsStream);
  const CoordList zCoords = core::downscaleFloor(yCoords, 4);

  const auto fpTables = factorizedPriorCdfs(p);
  const auto zSyms =
      entropy::ransDecode(rec.hyperStream, hyperCdfPtrs(fpTables, zCoords.size()));
  SparseTensor zHat(zCoords, symbolsToMat(zSyms, zCoords.size(), kHyperCh));
  const auto gp = hyperSynthesis(p, zHat, yCoords);

  const auto latentTables = gaussianCdfs(gp);
  const auto r = entropy::ransDecode(rec.latentStream, cdfPtrs(latentTables));
  const auto yHatF = entropy::dequantize(gp.mu, r);
  Mat yHatM(yCoords.size(), kLatentCh);
  yHatM.d = yHatF;
  out.yHat = SparseTensor(yCoords, std::move(yHatM));

  out.probs = synthesis(p, out.yHat, rec.k);
  out.selected = core::topKSelect(out.probs, std::min<std::size_t>(rec.k, out.probs.size()));
  (void)bs;
  return out;
}

namespace {
void accumulateGlobal(std::vector<std::pair<std::uint64_t, std::vector<double>>>& rows,
                      const SparseTensor& local, const VoxelCoord& origin) {
  const VoxelCoord base{origin.x / kStride, origin.y / kStride, origin.z / kStride};
  for (std::size_t i = 0; i < local.size(); ++i) {
    const VoxelCoord g{base.x + local.coords[i].x, base.y + local.coords[i].y,
                       base.z + local.coords[i].z};
    std::vector<double> f(local.features.row(i), local.features.row(i) + local.features.cols);
    rows.emplace_back(core::packCoord(g), std::move(f));
  }
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
}  // namespace

EncodedCloud encodeCloudBase(ParamStore& p, const PointCloud& pc, int sf, int bs) {
  return encodeCloudBaseScaled(p, core::downscaleCoords(pc, sf), sf, bs);
}

EncodedCloud encodeCloudBaseScaled(ParamStore& p, const PointCloud& scaled, int sf, int bs) {
  EncodedCloud out;
  std::vector<std::pair<std::uint64_t, std::vector<double>>> latentRows;
  std::vector<std::pair<std::uint64_t, std::vector<double>>> rawRows;
  std::vector<core::Block> recBlocks;
  for (const auto& b : core::splitBlocks(scaled, bs)) {
    EncodedBlock eb = encodeBlockBase(p, b, bs);
    out.payloadBytes += 8 + 12 + 4 + 4 + eb.rec.coordsStream.occupancyBytes.size() +
                        entropy::streamSizeBytes(eb.rec.hyperStream) +
                        entropy::streamSizeBytes(eb.rec.latentStream);
    accumulateGlobal(latentRows, eb.yHat, b.origin);
    accumulateGlobal(rawRows, eb.yRaw, b.origin);
    core::Block rb;
    rb.index = b.index;
    rb.origin = b.origin;
    rb.tensor = SparseTensor(eb.reconstructed, Mat(eb.reconstructed.size(), 0));
    recBlocks.push_back(std::move(rb));
    out.records.push_back(std::move(eb.rec));
  }
  out.yHatGlobal = finishGlobal(latentRows, kLatentCh);
  out.yRawGlobal = finishGlobal(rawRows, kLatentCh);
  out.reconstructed.points = core::upscaleCoords(core::mergeBlocks(recBlocks).points, sf);
  return out;
}

DecodedCloud decodeCloudBase(ParamStore& p, const std::vector<BlockRecord>& records, int sf,
                             int bs) {
  DecodedCloud out;
  std::vector<std::pair<std::uint64_t, std::vector<double>>> latentRows;
  std::vector<core::Block> recBlocks;
  for (const auto& rec : records) {
    DecodedBlock db = decodeBlockBase(p, rec, bs);
    accumulateGlobal(latentRows, db.yHat, rec.origin);
    core::Block rb;
    rb.index = rec.blockId;
    rb.origin = rec.origin;
    rb.tensor = SparseTensor(db.selected, Mat(db.selected.size(), 0));
    recBlocks.push_back(std::move(rb));
  }
  out.yHatGlobal = finishGlobal(latentRows, kLatentCh);
  out.reconstructed.points = core::upscaleCoords(core::mergeBlocks(recBlocks).points, sf);
  return out;
}

TrainStats trainStepBase(ParamStore& p, const Block& block, double lambda, bool backward) {
  const std::size_t n = block.tensor.size();
  if (n == 0) throw std::invalid_argument("trainStepBase: empty block");
  Tape t;
  SparseVar x{block.tensor.coords, t.input(onesFeatures(n))};
  SparseVar y = gaGraph(t, p, x);
  SparseVar z = haGraph(t, p, y);

  Tape::Var zq = t.roundClampST(z.features, entropy::kSupportMin, entropy::kSupportMax);
  SparseVar zin{z.coords, zq};
  HsOut hs = hsGraph(t, p, zin, y.coords);

  Tape::Var bitsY = t.gaussianNllBits(y.features, hs.mu, hs.sigma);

  Tape::Var logits = t.param(p, "fp.logits", kHyperCh, kFpBins, nn::Init::Zero);
  const Mat& zqv = t.value(zq);
  std::vector<std::int32_t> bins(zqv.size()), chans(zqv.size());
  for (std::size_t i = 0; i < zqv.size(); ++i) {
    bins[i] = std::int32_t(zqv.d[i]) - entropy::kSupportMin;
    chans[i] = std::int32_t(i % kHyperCh);
  }
  Tape::Var bitsZ = t.histogramRateBits(logits, std::move(bins), std::move(chans));

  // Quantized latents with straight-through gradients feed the synthesis path.
  Tape::Var r = t.roundClampST(t.sub(y.features, hs.mu), entropy::kSupportMin,
                               entropy::kSupportMax);
  SparseVar yHat{y.coords, t.add(hs.mu, r)};

  GsOut gs = gsGraph(t, p, yHat, n, &block.tensor.coords);
  Tape::Var f1 = t.focalLoss(gs.aux1,
                             core::occupancyLabels(gs.cand1, core::downscaleFloor(block.tensor.coords, 4)),
                             0.75, 2.0);
  Tape::Var f2 = t.focalLoss(gs.aux2,
                             core::occupancyLabels(gs.cand2, core::downscaleFloor(block.tensor.coords, 2)),
                             0.75, 2.0);
  Tape::Var f3 = t.focalLoss(gs.probs.features,
                             core::occupancyLabels(gs.probs.coords, block.tensor.coords), 0.75,
                             2.0);
  Tape::Var focal = t.add(t.add(f1, f2), f3);
  Tape::Var rate = t.scale(t.add(bitsY, bitsZ), lambda / double(n));
  Tape::Var loss = t.add(focal, rate);

  TrainStats s;
  s.focal = t.value(focal).d[0];
  s.bitsY = t.value(bitsY).d[0];
  s.bitsZ = t.value(bitsZ).d[0];
  s.loss = t.value(loss).d[0];
  if (!std::isfinite(s.loss)) throw std::runtime_error("trainStepBase: loss diverged (NaN/inf)");
  if (backward) t.backward(loss);
  return s;
}

BaseModels trainSequential(const std::vector<Block>& corpus, const TrainConfig& cfg,
                           std::ostream* log) {
  if (corpus.empty()) throw std::invalid_argument("trainSequential: empty corpus");
  BaseModels models;
  // Highest-rate model first (lowest lambda, qp=5), each next qp warm-started
  // from the previous checkpoint unless independent mode is on.
  int prevQp = 0;
  for (int qp = 5; qp >= 1; --qp) {
    ParamStore& p = models.at(qp);
    p.rngSeed = cfg.seed * 10 + std::uint64_t(qp);
    if (!cfg.independent && prevQp != 0) {
      for (const auto& [name, e] : models.at(prevQp).entries)
        p.ensure(name, e.w.rows, e.w.cols, nn::Init::Zero) = e.w;
    }
    const double lambda = lambdaForQp(qp);
    p.metadata["qp"] = std::to_string(qp);
    p.metadata["lambda"] = std::to_string(lambda);
    p.metadata["mode"] = cfg.independent ? "independent" : "sequential";
    p.metadata["init_from"] =
        (!cfg.independent && prevQp != 0) ? "qp" + std::to_string(prevQp) : "fresh";
    p.metadata["rate_norm"] = "per-input-point";

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      double sum = 0.0;
      for (const auto& b : corpus) {
        p.zeroGrad();
        sum += trainStepBase(p, b, lambda, true).loss;
        nn::adamStep(p, cfg.lr);
      }
      if (log)
        *log << "base,qp=" << qp << ",epoch=" << epoch << ",loss=" << sum / double(corpus.size())
             << "\n";
    }
    prevQp = qp;
  }
  return models;
}

}  // namespace spcc::base
