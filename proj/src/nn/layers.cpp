#include "spcc/nn/layers.hpp"

#include <unordered_map>

namespace spcc::nn {

using core::CoordList;
using core::VoxelCoord;

Tape::Var linear(Tape& t, ParamStore& p, const std::string& prefix, Tape::Var x,
                 std::size_t inCh, std::size_t outCh) {
  Tape::Var w = t.param(p, prefix + ".w", inCh, outCh, Init::He);
  Tape::Var b = t.param(p, prefix + ".b", 1, outCh, Init::Zero);
  return t.addRowBroadcast(t.matmul(x, w), b);
}

Tape::Var mlp(Tape& t, ParamStore& p, const std::string& prefix, Tape::Var x,
              const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw std::invalid_argument("mlp: need at least one layer");
  Tape::Var h = x;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    h = linear(t, p, prefix + ".l" + std::to_string(l), h, widths[l], widths[l + 1]);
    if (l + 2 < widths.size()) h = t.relu(h);
  }
  return h;
}

namespace {
std::unordered_map<std::uint64_t, std::int32_t> coordIndex(const CoordList& coords) {
  std::unordered_map<std::uint64_t, std::int32_t> map;
  map.reserve(coords.size() * 2);
  for (std::size_t i = 0; i < coords.size(); ++i)
    map.emplace(core::packCoord(coords[i]), std::int32_t(i));
  return map;
}

std::vector<VoxelCoord> kernelOffsets(int kernelSize, bool transposed) {
  std::vector<VoxelCoord> offsets;
  if (transposed) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) offsets.push_back({i, j, k});
  } else if (kernelSize == 1) {
    offsets.push_back({0, 0, 0});
  } else {
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j)
        for (int k = -1; k <= 1; ++k) offsets.push_back({i, j, k});
  }
  return offsets;
}
}  // namespace

SparseVar sparseConv(Tape& t, ParamStore& p, const std::string& prefix, const SparseVar& x,
                     const SparseConvSpec& spec) {
  if (t.value(x.features).cols != spec.inCh)
    throw std::invalid_argument("sparseConv: channel mismatch");
  if (spec.stride != 1 && spec.stride != 2)
    throw std::invalid_argument("sparseConv: stride must be 1 or 2");
  if (spec.transposed && spec.stride != 2)
    throw std::invalid_argument("sparseConv: transposed implies stride 2");

  SparseVar out;
  const auto offsets = kernelOffsets(spec.kernelSize, spec.transposed);

  if (spec.transposed) {
    // Every source voxel spawns its 8 children; child 2c+o gets W_o * x(c).
    out.coords = core::childCandidates(x.coords);
    auto outIdx = coordIndex(out.coords);
    Tape::Var acc = -1;
    for (std::size_t oi = 0; oi < offsets.size(); ++oi) {
      const auto& o = offsets[oi];
      std::vector<std::int32_t> scatter(x.coords.size());
      for (std::size_t i = 0; i < x.coords.size(); ++i) {
        const VoxelCoord child{2 * x.coords[i].x + o.x, 2 * x.coords[i].y + o.y,
                               2 * x.coords[i].z + o.z};
        scatter[i] = outIdx.at(core::packCoord(child));
      }
      Tape::Var w = t.param(p, prefix + ".w" + std::to_string(oi), spec.inCh, spec.outCh, Init::He);
      Tape::Var part = t.scatterAddRows(t.matmul(x.features, w), std::move(scatter),
                                        out.coords.size());
      acc = (acc < 0) ? part : t.add(acc, part);
    }
    Tape::Var b = t.param(p, prefix + ".b", 1, spec.outCh, Init::Zero);
    out.features = t.addRowBroadcast(acc, b);
    return out;
  }

  out.coords = (spec.stride == 1) ? x.coords : core::downscaleFloor(x.coords, 2);
  auto inIdx = coordIndex(x.coords);
  Tape::Var acc = -1;
  for (std::size_t oi = 0; oi < offsets.size(); ++oi) {
    const auto& o = offsets[oi];
    std::vector<std::int32_t> gather, scatter;
    for (std::size_t i = 0; i < out.coords.size(); ++i) {
      const VoxelCoord base{spec.stride * out.coords[i].x + o.x,
                            spec.stride * out.coords[i].y + o.y,
                            spec.stride * out.coords[i].z + o.z};
      auto it = inIdx.find(core::packCoord(base));
      if (it == inIdx.end()) continue;
      gather.push_back(it->second);
      scatter.push_back(std::int32_t(i));
    }
    if (gather.empty()) continue;
    Tape::Var w = t.param(p, prefix + ".w" + std::to_string(oi), spec.inCh, spec.outCh, Init::He);
    Tape::Var part = t.scatterAddRows(t.matmul(t.gatherRows(x.features, std::move(gather)), w),
                                      std::move(scatter), out.coords.size());
    acc = (acc < 0) ? part : t.add(acc, part);
  }
  if (acc < 0) {
    // No occupied taps anywhere (empty input); all-zero output features.
    out.features = t.input(Mat(out.coords.size(), spec.outCh));
  } else {
    Tape::Var b = t.param(p, prefix + ".b", 1, spec.outCh, Init::Zero);
    out.features = t.addRowBroadcast(acc, b);
  }
  return out;
}

SparseVar inceptionResBlock(Tape& t, ParamStore& p, const std::string& prefix, const SparseVar& x,
                            std::size_t ch) {
  if (ch % 2 != 0) throw std::invalid_argument("inceptionResBlock: channel count must be even");
  const std::size_t half = ch / 2;
  SparseConvSpec conv3{3, 1, half, half, false};
  // Path 1: 1x1 reduce, 3^3 conv.
  Tape::Var h1 = t.relu(linear(t, p, prefix + ".p1a", x.features, ch, half));
  SparseVar h1t = sparseConv(t, p, prefix + ".p1b", {x.coords, h1}, conv3);
  // Path 2: 3^3 conv, 1x1 mix.
  SparseConvSpec conv3full{3, 1, ch, half, false};
  SparseVar h2t = sparseConv(t, p, prefix + ".p2a", x, conv3full);
  Tape::Var h2 = linear(t, p, prefix + ".p2b", t.relu(h2t.features), half, half);
  Tape::Var cat = t.concatCols(h1t.features, h2);
  Tape::Var mix = linear(t, p, prefix + ".mix", cat, ch, ch);
  return {x.coords, t.add(x.features, mix)};
}

SparseVar vectorAttention(Tape& t, ParamStore& p, const std::string& prefix, const SparseVar& a,
                          const SparseVar& b, std::size_t width, std::size_t attnDim,
                          int neighbors) {
  if (a.coords.empty()) throw std::invalid_argument("vectorAttention: empty key/value input");
  const std::size_t n = b.coords.size();
  const std::size_t k = std::size_t(neighbors);

  auto nbr = core::knn(b.coords, a.coords, neighbors);

  Tape::Var Q = linear(t, p, prefix + ".q", b.features, width, attnDim);
  Tape::Var K = linear(t, p, prefix + ".k", a.features, width, attnDim);
  Tape::Var V = linear(t, p, prefix + ".v", a.features, width, attnDim);

  std::vector<std::int32_t> qrep(n * k);
  for (std::size_t i = 0; i < n * k; ++i) qrep[i] = std::int32_t(i / k);
  Tape::Var Qn = t.gatherRows(Q, std::move(qrep));
  Tape::Var Kn = t.gatherRows(K, nbr);
  Tape::Var Vn = t.gatherRows(V, nbr);

  // Relative positions q - n feed a small MLP shared by logits and values.
  Mat rel(n * k, 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const auto& q = b.coords[i];
      const auto& r = a.coords[std::size_t(nbr[i * k + j])];
      rel.at(i * k + j, 0) = double(q.x - r.x);
      rel.at(i * k + j, 1) = double(q.y - r.y);
      rel.at(i * k + j, 2) = double(q.z - r.z);
    }
  Tape::Var delta = mlp(t, p, prefix + ".pos", t.input(std::move(rel)), {3, attnDim, attnDim});

  Tape::Var pre = t.add(t.sub(Qn, Kn), delta);
  Tape::Var logits = mlp(t, p, prefix + ".wgt", pre, {attnDim, attnDim, attnDim});
  Tape::Var attn = t.groupSoftmax(logits, k);
  Tape::Var ctx = t.groupSum(t.mul(attn, t.add(Vn, delta)), k);
  Tape::Var upd = linear(t, p, prefix + ".out", ctx, attnDim, width);
  return {b.coords, t.add(b.features, upd)};
}

}  // namespace spcc::nn
