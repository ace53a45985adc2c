#include "spcc/core.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace spcc::core {

SparseTensor::SparseTensor(CoordList c, Mat f) : coords(std::move(c)), features(std::move(f)) {
  if (features.rows != coords.size())
    throw std::invalid_argument("SparseTensor: feature rows must match coordinate count");
  for (std::size_t i = 1; i < coords.size(); ++i)
    if (!(coords[i - 1] < coords[i]))
      throw std::invalid_argument("SparseTensor: coordinates must be strictly sorted");
}

bool isPowerOfTwo(int v) { return v > 0 && (v & (v - 1)) == 0; }

void validateConfig(const CodingConfig& cfg) {
  if (cfg.qp < 1 || cfg.qp > 5) throw std::invalid_argument("qp must be in [1,5]");
  if (!isPowerOfTwo(cfg.sf)) throw std::invalid_argument("sf must be a power of two");
}

void canonicalize(CoordList& coords) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
}

namespace {
std::int32_t divRound(std::int32_t v, int sf) {
  // Non-negative inputs only; half rounds away from zero.
  return (v + sf / 2) / sf;
}
}  // namespace

CoordList downscaleCoords(const CoordList& coords, int sf) {
  if (!isPowerOfTwo(sf)) throw std::invalid_argument("downscale: sf must be a power of two");
  CoordList out;
  out.reserve(coords.size());
  for (const auto& c : coords)
    out.push_back({divRound(c.x, sf), divRound(c.y, sf), divRound(c.z, sf)});
  canonicalize(out);
  return out;
}

PointCloud downscaleCoords(const PointCloud& pc, int sf) {
  PointCloud out;
  out.points = downscaleCoords(pc.points, sf);
  return out;
}

CoordList downscaleFloor(const CoordList& coords, int f) {
  if (!isPowerOfTwo(f)) throw std::invalid_argument("downscaleFloor: factor must be a power of two");
  CoordList out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back({c.x / f, c.y / f, c.z / f});
  canonicalize(out);
  return out;
}

CoordList upscaleCoords(const CoordList& coords, int factor) {
  if (!isPowerOfTwo(factor)) throw std::invalid_argument("upscale: factor must be a power of two");
  CoordList out;
  out.reserve(coords.size());
  for (const auto& c : coords) {
    std::int64_t x = std::int64_t(c.x) * factor;
    std::int64_t y = std::int64_t(c.y) * factor;
    std::int64_t z = std::int64_t(c.z) * factor;
    if (x > kCoordMax || y > kCoordMax || z > kCoordMax)
      throw std::range_error("upscale: coordinate exceeds 21-bit range");
    out.push_back({std::int32_t(x), std::int32_t(y), std::int32_t(z)});
  }
  return out;
}

std::uint64_t mortonCode(const VoxelCoord& c) {
  std::uint64_t code = 0;
  for (int b = 0; b < kCoordBits; ++b) {
    code |= (std::uint64_t(c.x >> b) & 1u) << (3 * b + 2);
    code |= (std::uint64_t(c.y >> b) & 1u) << (3 * b + 1);
    code |= (std::uint64_t(c.z >> b) & 1u) << (3 * b);
  }
  return code;
}

std::vector<Block> splitBlocks(const PointCloud& pc, int bs) {
  if (!isPowerOfTwo(bs)) throw std::invalid_argument("splitBlocks: bs must be a power of two");
  std::unordered_map<std::uint64_t, CoordList> groups;
  for (const auto& p : pc.points) {
    VoxelCoord origin{p.x / bs * bs, p.y / bs * bs, p.z / bs * bs};
    groups[packCoord(origin)].push_back({p.x - origin.x, p.y - origin.y, p.z - origin.z});
  }
  std::vector<Block> blocks;
  blocks.reserve(groups.size());
  for (auto& [key, locals] : groups) {
    Block b;
    b.origin = unpackCoord(key);
    b.index = mortonCode({b.origin.x / bs, b.origin.y / bs, b.origin.z / bs});
    canonicalize(locals);
    Mat ones(locals.size(), 1, 1.0);
    b.tensor = SparseTensor(std::move(locals), std::move(ones));
    blocks.push_back(std::move(b));
  }
  std::sort(blocks.begin(), blocks.end(),
            [](const Block& a, const Block& b) { return a.index < b.index; });
  return blocks;
}

PointCloud mergeBlocks(const std::vector<Block>& blocks) {
  PointCloud out;
  std::vector<std::uint64_t> seen;
  seen.reserve(blocks.size());
  for (const auto& b : blocks) {
    seen.push_back(packCoord(b.origin));
    for (const auto& c : b.tensor.coords)
      out.points.push_back({c.x + b.origin.x, c.y + b.origin.y, c.z + b.origin.z});
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    throw std::invalid_argument("mergeBlocks: overlapping block origins");
  canonicalize(out.points);
  return out;
}

CoordList childCandidates(const CoordList& coords) {
  std::vector<std::uint64_t> keys;
  keys.reserve(coords.size() * 8);
  for (const auto& c : coords)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          keys.push_back(packCoord({2 * c.x + i, 2 * c.y + j, 2 * c.z + k}));
  std::sort(keys.begin(), keys.end());
  CoordList out;
  out.reserve(keys.size());
  for (auto k : keys) out.push_back(unpackCoord(k));
  return out;
}

std::vector<std::uint8_t> occupancyLabels(const CoordList& candidates, const CoordList& target) {
  std::vector<std::uint8_t> labels(candidates.size(), 0);
  std::size_t ti = 0;
  for (std::size_t ci = 0; ci < candidates.size() && ti < target.size(); ++ci) {
    if (target[ti] < candidates[ci])
      throw std::invalid_argument("occupancyLabels: target coordinate not covered by candidates");
    if (candidates[ci] == target[ti]) {
      labels[ci] = 1;
      ++ti;
    }
  }
  if (ti != target.size())
    throw std::invalid_argument("occupancyLabels: target coordinate not covered by candidates");
  return labels;
}

CoordList topKSelect(const SparseTensor& tensor, std::size_t k) {
  if (tensor.channels() != 1)
    throw std::invalid_argument("topKSelect: tensor must have one feature channel");
  if (k < 1 || k > tensor.size()) throw std::invalid_argument("topKSelect: k out of range");
  std::vector<std::size_t> idx(tensor.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](std::size_t a, std::size_t b) {
    double pa = tensor.features.at(a, 0), pb = tensor.features.at(b, 0);
    if (pa != pb) return pa > pb;
    return tensor.coords[a] < tensor.coords[b];
  });
  CoordList out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(tensor.coords[idx[i]]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::int32_t> knn(const CoordList& queries, const CoordList& refs, int k) {
  if (refs.empty()) throw std::invalid_argument("knn: empty reference set");
  if (k < 1) throw std::invalid_argument("knn: k must be positive");
  std::vector<std::int32_t> out(queries.size() * k);
  std::vector<std::pair<std::int64_t, std::int32_t>> best;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    best.clear();
    for (std::size_t ri = 0; ri < refs.size(); ++ri) {
      std::int64_t dx = q.x - refs[ri].x, dy = q.y - refs[ri].y, dz = q.z - refs[ri].z;
      best.emplace_back(dx * dx + dy * dy + dz * dz, std::int32_t(ri));
    }
    std::size_t take = std::min<std::size_t>(k, best.size());
    std::partial_sort(best.begin(), best.begin() + take, best.end());
    // Pad by repeating the nearest when refs are scarce.
    for (std::size_t j = 0; j < std::size_t(k); ++j)
      out[qi * k + j] = (j < take) ? best[j].second : best[0].second;
  }
  return out;
}

}  // namespace spcc::core
