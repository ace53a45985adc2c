#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <bit>
#include <random>
#include <set>

#include "spcc/octree.hpp"

using namespace spcc;
using namespace spcc::core;

namespace {
CoordList randomCoords(std::mt19937_64& rng, std::size_t n, std::int32_t limit) {
  std::uniform_int_distribution<std::int32_t> dist(0, limit - 1);
  CoordList out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({dist(rng), dist(rng), dist(rng)});
  canonicalize(out);
  return out;
}

// Independent count of internal occupied nodes by a prefix-set walk.
std::size_t internalNodeCount(const CoordList& coords, int depth) {
  std::size_t count = 0;
  for (int level = 0; level < depth; ++level) {
    std::set<std::uint64_t> prefixes;
    for (const auto& c : coords)
      prefixes.insert(packCoord({c.x >> (depth - level), c.y >> (depth - level),
                                 c.z >> (depth - level)}));
    count += prefixes.size();
  }
  return count;
}
}  // namespace

TEST_CASE("single point at depth 1") {
  auto s = octree::encode({{0, 0, 0}}, 1);
  REQUIRE(s.occupancyBytes.size() == 1);
  CHECK(std::popcount(s.occupancyBytes[0]) == 1);
  CHECK(octree::decode(s) == CoordList{{0, 0, 0}});
}

TEST_CASE("full unit cube is one 0xFF byte") {
  CoordList all;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) all.push_back({i, j, k});
  canonicalize(all);
  auto s = octree::encode(all, 1);
  REQUIRE(s.occupancyBytes.size() == 1);
  CHECK(s.occupancyBytes[0] == 0xFF);
  CHECK(octree::decode(s) == all);
}

TEST_CASE("exhaustive round-trip at depth <= 2") {
  // Depth 1: all 255 non-empty subsets of the 8 cells.
  for (unsigned mask = 1; mask < 256; ++mask) {
    CoordList coords;
    for (unsigned b = 0; b < 8; ++b)
      if (mask & (1u << b))
        coords.push_back({std::int32_t(b >> 2 & 1), std::int32_t(b >> 1 & 1), std::int32_t(b & 1)});
    canonicalize(coords);
    auto s = octree::encode(coords, 1);
    CHECK(octree::decode(s) == coords);
  }
  // Depth 2: randomized dense subsets of the 64 cells.
  std::mt19937_64 rng(11);
  for (int it = 0; it < 200; ++it) {
    auto coords = randomCoords(rng, 1 + std::size_t(rng() % 64), 4);
    auto s = octree::encode(coords, 2);
    CHECK(octree::decode(s) == coords);
  }
}

TEST_CASE("randomized round-trip and node-count invariant") {
  std::mt19937_64 rng(12);
  for (int depth = 3; depth <= 7; ++depth) {
    for (int it = 0; it < 20; ++it) {
      auto coords = randomCoords(rng, 300, 1 << depth);
      auto s = octree::encode(coords, depth);
      CHECK(octree::decode(s) == coords);
      CHECK(s.occupancyBytes.size() == internalNodeCount(coords, depth));
    }
  }
}

TEST_CASE("error paths") {
  CHECK_THROWS_AS(octree::encode({{2, 0, 0}}, 1), std::range_error);
  CHECK_THROWS_AS(octree::encode({}, 3), std::invalid_argument);

  auto s = octree::encode({{1, 2, 3}}, 3);
  auto truncated = s;
  truncated.occupancyBytes.pop_back();
  CHECK_THROWS_AS(octree::decode(truncated), octree::CorruptStream);

  auto zeroed = s;
  zeroed.occupancyBytes[0] = 0;
  CHECK_THROWS_AS(octree::decode(zeroed), octree::CorruptStream);

  auto extra = s;
  extra.occupancyBytes.push_back(0x01);
  CHECK_THROWS_AS(octree::decode(extra), octree::CorruptStream);
}
