#pragma once

#include <array>

#include "spcc/core.hpp"

namespace spcc::metrics {

struct RdPoint {
  double bpp = 0.0;
  double psnrD1 = 0.0;  // dB; +infinity for lossless
  double psnrD2 = 0.0;
};

// Symmetric point-to-point PSNR: MSE is the max of the two directional means,
// PSNR = 10*log10(3*peak^2 / MSE). Identical clouds give +infinity.
double psnrD1(const core::PointCloud& ref, const core::PointCloud& rec, double peak);

// Point-to-plane variant: squared error projected onto the reference normal.
// Normals are taken from the clouds when present, otherwise estimated from a
// 9-NN covariance plane fit. Points with a degenerate neighborhood fall back
// to the D1 error; `degenerate` (optional) counts them.
double psnrD2(const core::PointCloud& ref, const core::PointCloud& rec, double peak,
              std::size_t* degenerate = nullptr);

// 9-NN covariance normals (unit length, smallest eigenvector). A degenerate
// fit (collinear/duplicated neighborhood) leaves a zero normal.
std::vector<std::array<double, 3>> estimateNormals(const core::CoordList& points);

double bpp(std::size_t streamBytes, std::size_t originalPoints);

// Bjontegaard deltas of curve B against curve A over the overlapping range.
// Both the classic cubic-polynomial fit and a monotone piecewise-cubic-Hermite
// fit are computed; the PCHIP values are authoritative.
struct BdResult {
  double bdRate = 0.0;      // percent, PCHIP
  double bdPsnr = 0.0;      // dB, PCHIP
  double bdRatePoly = 0.0;  // percent, cubic polynomial
  double bdPsnrPoly = 0.0;  // dB, cubic polynomial
};
BdResult bdMetrics(const std::vector<RdPoint>& curveA, const std::vector<RdPoint>& curveB);

// Mean cosine similarity between latent feature vectors at matched coords,
// for every (qp_s, qp_t) pair. Same-resolution pairs match coords exactly;
// cross-resolution pairs upscale the coarser coords and average over matches
// within Euclidean radius 2. Entries without any match are flagged missing.
struct SimilarityMatrix {
  std::array<std::array<double, 5>, 5> value{};    // [qp_s-1][qp_t-1]
  std::array<std::array<bool, 5>, 5> present{};
  int sfS = 1, sfT = 1;
};
SimilarityMatrix cosineMatrix(const std::array<core::SparseTensor, 5>& latentsS,
                              const std::array<core::SparseTensor, 5>& latentsT, int sfS,
                              int sfT);

}  // namespace spcc::metrics
