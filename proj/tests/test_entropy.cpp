#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "spcc/entropy.hpp"

using namespace spcc::entropy;

namespace {
double stdNormalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
}  // namespace

TEST_CASE("gaussian cdf mass matches the analytic distribution") {
  auto t = buildGaussianCdf(0.0, 1.0);
  CHECK(t.total() == (1u << kPrecisionBits));
  CHECK(t.symbolOffset == kSupportMin);
  CHECK(t.alphabetSize() == std::size_t(kSupportMax - kSupportMin + 1));

  // P(0) = Phi(0.5) - Phi(-0.5) ~ 0.3829 for N(0, 1); the one-count floor on
  // every tail bin shaves roughly 255/2^16 of the mass off the peak.
  const double p0 = double(t.freq(0)) / t.total();
  CHECK(p0 == doctest::Approx(0.3829).epsilon(1.5e-2));
  const double p1 = double(t.freq(1)) / t.total();
  CHECK(p1 == doctest::Approx(stdNormalCdf(1.5) - stdNormalCdf(0.5)).epsilon(5e-3));

  // Monotone cdf, every frequency positive.
  for (std::size_t i = 0; i + 1 < t.cdf.size(); ++i) CHECK(t.cdf[i] < t.cdf[i + 1]);

  // symbolAt must invert the table at every slot boundary.
  for (int s = kSupportMin; s <= kSupportMax; ++s) {
    CHECK(t.symbolAt(t.start(s)) == s);
    CHECK(t.symbolAt(t.start(s) + t.freq(s) - 1) == s);
  }
}

TEST_CASE("gaussian cdf folds tails and honors sigma floor") {
  // Narrow sigma concentrates almost all mass in one bin.
  auto narrow = buildGaussianCdf(3.0, 1e-9);
  CHECK(double(narrow.freq(3)) / narrow.total() > 0.99);
  for (int s = kSupportMin; s <= kSupportMax; ++s) CHECK(narrow.freq(s) >= 1);

  // A mean far outside the support piles mass into the boundary bin.
  auto shifted = buildGaussianCdf(500.0, 1.0);
  CHECK(double(shifted.freq(kSupportMax)) / shifted.total() > 0.99);
  CHECK(shifted.total() == (1u << kPrecisionBits));
}

TEST_CASE("bernoulli cdf") {
  auto t = buildBernoulliCdf(0.25);
  CHECK(t.alphabetSize() == 2);
  CHECK(t.symbolOffset == 0);
  CHECK(double(t.freq(1)) / t.total() == doctest::Approx(0.25).epsilon(1e-3));
  CHECK(t.freq(0) + t.freq(1) == t.total());

  // Extreme probabilities still leave both symbols codable.
  CHECK(buildBernoulliCdf(0.0).freq(1) >= 1);
  CHECK(buildBernoulliCdf(1.0).freq(0) >= 1);
}

TEST_CASE("weighted cdf drift repair") {
  std::vector<double> w = {1.0, 1.0, 1.0};
  auto t = buildWeightedCdf(w, 0);
  CHECK(t.total() == (1u << kPrecisionBits));
  CHECK(t.alphabetSize() == 3);
  // Equal weights give near-equal slots.
  for (int s = 0; s < 3; ++s)
    CHECK(double(t.freq(s)) / t.total() == doctest::Approx(1.0 / 3.0).epsilon(1e-3));

  std::vector<double> tiny = {1e-12, 1.0, 1e-12};
  auto t2 = buildWeightedCdf(tiny, -1);
  CHECK(t2.total() == (1u << kPrecisionBits));
  CHECK(t2.freq(-1) >= 1);
  CHECK(t2.freq(1) >= 1);
}

TEST_CASE("residual quantization rounds ties away from zero") {
  CHECK(quantizeResidual(0.5, 0.0) == 1);
  CHECK(quantizeResidual(-0.5, 0.0) == -1);
  CHECK(quantizeResidual(2.4, 0.0) == 2);
  CHECK(quantizeResidual(3.2, 1.0) == 2);
  CHECK(quantizeResidual(1e6, 0.0) == kSupportMax);   // clamped to support
  CHECK(quantizeResidual(-1e6, 0.0) == kSupportMin);

  std::vector<double> y = {1.2, -0.7}, mu = {1.0, 0.0};
  auto r = quantizeResiduals(y, mu);
  CHECK(r == std::vector<int>{0, -1});
  auto yq = dequantize(mu, r);
  CHECK(yq[0] == 1.0);
  CHECK(yq[1] == -1.0);
}

TEST_CASE("rans empty stream") {
  auto t = buildGaussianCdf(0.0, 1.0);
  auto s = ransEncode(std::vector<int>{}, t);
  CHECK(s.symbolCount == 0);
  CHECK(ransDecode(s, t, 0).empty());
  CHECK(streamSizeBytes(s) == 8 + s.bytes.size());
}

TEST_CASE("rans round-trip with a shared model") {
  std::mt19937_64 rng(21);
  auto t = buildGaussianCdf(0.3, 2.5);
  std::normal_distribution<double> dist(0.3, 2.5);
  std::vector<int> syms;
  for (int i = 0; i < 5000; ++i)
    syms.push_back(quantizeResidual(dist(rng), 0.0));
  auto s = ransEncode(syms, t);
  CHECK(s.symbolCount == syms.size());
  CHECK(ransDecode(s, t, syms.size()) == syms);

  // Coded size should sit near the model's own rate estimate.
  const double bits = rateEstimateBits(syms, t);
  const double bytes = double(s.bytes.size());
  CHECK(bytes > bits / 8.0 - 8);
  CHECK(bytes < bits / 8.0 * 1.02 + 16);
}

TEST_CASE("rans round-trip with per-symbol models") {
  std::mt19937_64 rng(22);
  std::vector<CdfTable> tables;
  std::vector<int> syms;
  std::uniform_real_distribution<double> muD(-3.0, 3.0), sgD(0.2, 4.0);
  for (int i = 0; i < 2000; ++i) {
    tables.push_back(buildGaussianCdf(muD(rng), sgD(rng)));
    std::normal_distribution<double> d(0.0, 2.0);
    syms.push_back(quantizeResidual(d(rng), 0.0));
  }
  std::vector<const CdfTable*> ptrs;
  for (const auto& t : tables) ptrs.push_back(&t);
  auto s = ransEncode(syms, ptrs);
  CHECK(ransDecode(s, ptrs) == syms);
}

TEST_CASE("uniform 16-symbol alphabet codes at 4 bits per symbol") {
  std::vector<double> w(16, 1.0);
  auto t = buildWeightedCdf(w, 0);
  std::mt19937_64 rng(23);
  std::vector<int> syms;
  for (int i = 0; i < 4096; ++i) syms.push_back(int(rng() % 16));
  auto s = ransEncode(syms, t);
  CHECK(ransDecode(s, t, syms.size()) == syms);
  // 4096 * 4 bits = 2048 bytes, give or take state flush and renorm slack.
  CHECK(double(s.bytes.size()) == doctest::Approx(2048.0).epsilon(0.02));
}

TEST_CASE("bernoulli stream round-trip") {
  std::mt19937_64 rng(24);
  std::vector<CdfTable> tables;
  std::vector<int> syms;
  std::uniform_real_distribution<double> pD(0.01, 0.99);
  for (int i = 0; i < 3000; ++i) {
    const double p = pD(rng);
    tables.push_back(buildBernoulliCdf(p));
    std::bernoulli_distribution d(p);
    syms.push_back(d(rng) ? 1 : 0);
  }
  std::vector<const CdfTable*> ptrs;
  for (const auto& t : tables) ptrs.push_back(&t);
  auto s = ransEncode(syms, ptrs);
  CHECK(ransDecode(s, ptrs) == syms);
  // Well-modeled bits should beat 1 bit/symbol on average.
  CHECK(rateEstimateBits(syms, ptrs) < double(syms.size()));
}

TEST_CASE("corrupt streams are rejected") {
  auto t = buildGaussianCdf(0.0, 1.0);
  std::vector<int> syms = {0, 1, -1, 2, 0, 0, 3};
  auto s = ransEncode(syms, t);

  auto truncated = s;
  truncated.bytes.pop_back();
  CHECK_THROWS_AS(ransDecode(truncated, t, syms.size()), CorruptStream);

  auto padded = s;
  padded.bytes.insert(padded.bytes.begin(), 0xAB);
  CHECK_THROWS_AS(ransDecode(padded, t, syms.size()), CorruptStream);

  auto tooShort = s;
  tooShort.bytes = {0x01, 0x02};
  CHECK_THROWS_AS(ransDecode(tooShort, t, syms.size()), CorruptStream);
}
