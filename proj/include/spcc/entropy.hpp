#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace spcc::entropy {

constexpr int kPrecisionBits = 16;
constexpr double kSigmaMin = 0.01;
// Residual support; out-of-range values are clamped at encode time.
constexpr int kSupportMin = -127;
constexpr int kSupportMax = 128;

struct CorruptStream : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fixed-point CDF over a contiguous signed-symbol alphabet. Every symbol has
// frequency >= 1 so the coder never meets a zero-probability symbol.
struct CdfTable {
  int precisionBits = kPrecisionBits;
  std::vector<std::uint32_t> cdf;  // cdf[0] = 0, cdf.back() = 1 << precisionBits
  int symbolOffset = 0;            // symbol value of alphabet index 0

  std::uint32_t total() const { return cdf.back(); }
  std::size_t alphabetSize() const { return cdf.size() - 1; }
  bool contains(int symbol) const {
    return symbol >= symbolOffset && symbol < symbolOffset + int(alphabetSize());
  }
  std::uint32_t freq(int symbol) const {
    const std::size_t i = std::size_t(symbol - symbolOffset);
    return cdf[i + 1] - cdf[i];
  }
  std::uint32_t start(int symbol) const { return cdf[std::size_t(symbol - symbolOffset)]; }
  // Index of the symbol whose [start, start+freq) slot contains `value`.
  int symbolAt(std::uint32_t value) const;
};

struct GaussianParams {
  std::vector<double> mu;
  std::vector<double> sigma;
};

struct RansStream {
  std::vector<std::uint8_t> bytes;  // renorm bytes, then 4-byte final state
  std::uint32_t symbolCount = 0;
};

// Discretized N(mu, sigma) over [smin, smax] with tail mass folded into the
// boundary bins.
CdfTable buildGaussianCdf(double mu, double sigma, int smin = kSupportMin,
                          int smax = kSupportMax, int precisionBits = kPrecisionBits);

// Two-symbol table {0, 1} with P(1) = p, quantized identically on both sides.
CdfTable buildBernoulliCdf(double p, int precisionBits = kPrecisionBits);

// Fixed-point table from arbitrary positive weights over [smin, smax].
CdfTable buildWeightedCdf(std::span<const double> weights, int smin,
                          int precisionBits = kPrecisionBits);

int quantizeResidual(double y, double mu);
std::vector<int> quantizeResiduals(std::span<const double> y, std::span<const double> mu);
std::vector<double> dequantize(std::span<const double> mu, std::span<const int> r);

RansStream ransEncode(std::span<const int> symbols, std::span<const CdfTable* const> cdfs);
std::vector<int> ransDecode(const RansStream& stream, std::span<const CdfTable* const> cdfs);

// Convenience for a single shared model.
RansStream ransEncode(std::span<const int> symbols, const CdfTable& cdf);
std::vector<int> ransDecode(const RansStream& stream, const CdfTable& cdf, std::size_t n);

// Sum of -log2 P(symbol) under the same fixed-point tables the coder uses.
double rateEstimateBits(std::span<const int> symbols, std::span<const CdfTable* const> cdfs);
double rateEstimateBits(std::span<const int> symbols, const CdfTable& cdf);

// Serialized size: 8-byte header + payload (incl. 4-byte flushed state).
std::size_t streamSizeBytes(const RansStream& s);

}  // namespace spcc::entropy
