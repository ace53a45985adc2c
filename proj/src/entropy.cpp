#include "spcc/entropy.hpp"

#include <algorithm>
#include <cmath>

namespace spcc::entropy {

namespace {
constexpr std::uint32_t kRansL = 1u << 23;  // renormalization lower bound

double stdNormalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
}  // namespace

int CdfTable::symbolAt(std::uint32_t value) const {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), value);
  return int(it - cdf.begin()) - 1 + symbolOffset;
}

CdfTable buildWeightedCdf(std::span<const double> weights, int smin, int precisionBits) {
  if (weights.empty()) throw std::invalid_argument("buildWeightedCdf: empty alphabet");
  const std::uint32_t total = 1u << precisionBits;
  if (weights.size() > total) throw std::invalid_argument("buildWeightedCdf: alphabet too large");
  double norm = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("buildWeightedCdf: weights must be finite and non-negative");
    norm += w;
  }
  if (norm <= 0.0) throw std::invalid_argument("buildWeightedCdf: zero total weight");

  std::vector<std::uint32_t> freq(weights.size());
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto f = std::uint32_t(std::llround(weights[i] / norm * double(total)));
    freq[i] = std::max<std::uint32_t>(1, f);
    sum += freq[i];
  }
  // Deterministic repair of the rounding drift: always move mass at the
  // currently largest bin (ties to the lowest index).
  while (sum != total) {
    std::size_t big = std::size_t(std::max_element(freq.begin(), freq.end()) - freq.begin());
    if (sum < total) {
      freq[big] += std::uint32_t(total - sum);
      sum = total;
    } else {
      std::uint32_t cut = std::min<std::uint32_t>(freq[big] - 1, std::uint32_t(sum - total));
      freq[big] -= cut;
      sum -= cut;
      if (cut == 0) throw std::logic_error("buildWeightedCdf: cannot normalize");
    }
  }

  CdfTable t;
  t.precisionBits = precisionBits;
  t.symbolOffset = smin;
  t.cdf.resize(weights.size() + 1);
  t.cdf[0] = 0;
  for (std::size_t i = 0; i < freq.size(); ++i) t.cdf[i + 1] = t.cdf[i] + freq[i];
  return t;
}

CdfTable buildGaussianCdf(double mu, double sigma, int smin, int smax, int precisionBits) {
  if (smin > 0 || smax < 0 || smin >= smax)
    throw std::invalid_argument("buildGaussianCdf: degenerate support");
  sigma = std::max(sigma, kSigmaMin);
  std::vector<double> w(std::size_t(smax - smin + 1));
  for (int s = smin; s <= smax; ++s) {
    double lo = (s - 0.5 - mu) / sigma;
    double hi = (s + 0.5 - mu) / sigma;
    double p = stdNormalCdf(hi) - stdNormalCdf(lo);
    if (s == smin) p += stdNormalCdf(lo);            // fold lower tail
    if (s == smax) p += 1.0 - stdNormalCdf(hi);      // fold upper tail
    w[std::size_t(s - smin)] = p;
  }
  return buildWeightedCdf(w, smin, precisionBits);
}

CdfTable buildBernoulliCdf(double p, int precisionBits) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  const double w[2] = {1.0 - p, p};
  return buildWeightedCdf(w, 0, precisionBits);
}

int quantizeResidual(double y, double mu) {
  const double r = y - mu;
  // Ties half away from zero, clamped to the coded support.
  const int q = int(r >= 0.0 ? std::floor(r + 0.5) : std::ceil(r - 0.5));
  return std::clamp(q, kSupportMin, kSupportMax);
}

std::vector<int> quantizeResiduals(std::span<const double> y, std::span<const double> mu) {
  if (y.size() != mu.size()) throw std::invalid_argument("quantizeResiduals: length mismatch");
  std::vector<int> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = quantizeResidual(y[i], mu[i]);
  return r;
}

std::vector<double> dequantize(std::span<const double> mu, std::span<const int> r) {
  if (mu.size() != r.size()) throw std::invalid_argument("dequantize: length mismatch");
  std::vector<double> y(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) y[i] = mu[i] + r[i];
  return y;
}

RansStream ransEncode(std::span<const int> symbols, std::span<const CdfTable* const> cdfs) {
  if (symbols.size() != cdfs.size()) throw std::invalid_argument("ransEncode: length mismatch");
  RansStream out;
  out.symbolCount = std::uint32_t(symbols.size());
  if (symbols.empty()) return out;

  std::vector<std::uint8_t> emitted;
  emitted.reserve(symbols.size() * 2);
  std::uint32_t x = kRansL;
  for (std::size_t n = symbols.size(); n-- > 0;) {
    const CdfTable& t = *cdfs[n];
    const int s = symbols[n];
    if (!t.contains(s)) throw std::range_error("ransEncode: symbol outside table support");
    const std::uint32_t f = t.freq(s);
    const std::uint32_t xMax = ((kRansL >> t.precisionBits) << 8) * f;
    while (x >= xMax) {
      emitted.push_back(std::uint8_t(x & 0xff));
      x >>= 8;
    }
    x = ((x / f) << t.precisionBits) + (x % f) + t.start(s);
  }
  // Decoder consumes renorm bytes in reverse emission order; store reversed
  // so it can read forward. Final state flushed at the payload tail.
  out.bytes.assign(emitted.rbegin(), emitted.rend());
  for (int i = 0; i < 4; ++i) out.bytes.push_back(std::uint8_t((x >> (8 * i)) & 0xff));
  return out;
}

std::vector<int> ransDecode(const RansStream& stream, std::span<const CdfTable* const> cdfs) {
  if (stream.symbolCount != cdfs.size()) throw std::invalid_argument("ransDecode: length mismatch");
  std::vector<int> out(stream.symbolCount);
  if (stream.symbolCount == 0) {
    if (!stream.bytes.empty()) throw CorruptStream("ransDecode: trailing bytes");
    return out;
  }
  if (stream.bytes.size() < 4) throw CorruptStream("ransDecode: truncated stream");
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i)
    x |= std::uint32_t(stream.bytes[stream.bytes.size() - 4 + i]) << (8 * i);
  std::size_t pos = 0;
  const std::size_t renormEnd = stream.bytes.size() - 4;
  for (std::size_t n = 0; n < out.size(); ++n) {
    const CdfTable& t = *cdfs[n];
    const std::uint32_t mask = t.total() - 1;
    const std::uint32_t slot = x & mask;
    const int s = t.symbolAt(slot);
    out[n] = s;
    x = t.freq(s) * (x >> t.precisionBits) + slot - t.start(s);
    while (x < kRansL) {
      if (pos >= renormEnd) throw CorruptStream("ransDecode: state underflow");
      x = (x << 8) | stream.bytes[pos++];
    }
  }
  if (pos != renormEnd || x != kRansL) throw CorruptStream("ransDecode: trailing garbage");
  return out;
}

RansStream ransEncode(std::span<const int> symbols, const CdfTable& cdf) {
  std::vector<const CdfTable*> cdfs(symbols.size(), &cdf);
  return ransEncode(symbols, cdfs);
}

std::vector<int> ransDecode(const RansStream& stream, const CdfTable& cdf, std::size_t n) {
  std::vector<const CdfTable*> cdfs(n, &cdf);
  return ransDecode(stream, cdfs);
}

double rateEstimateBits(std::span<const int> symbols, std::span<const CdfTable* const> cdfs) {
  if (symbols.size() != cdfs.size()) throw std::invalid_argument("rateEstimateBits: length mismatch");
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const CdfTable& t = *cdfs[i];
    if (!t.contains(symbols[i])) throw std::range_error("rateEstimateBits: symbol outside support");
    bits -= std::log2(double(t.freq(symbols[i])) / double(t.total()));
  }
  return bits;
}

double rateEstimateBits(std::span<const int> symbols, const CdfTable& cdf) {
  std::vector<const CdfTable*> cdfs(symbols.size(), &cdf);
  return rateEstimateBits(symbols, cdfs);
}

std::size_t streamSizeBytes(const RansStream& s) { return 8 + s.bytes.size(); }

}  // namespace spcc::entropy
