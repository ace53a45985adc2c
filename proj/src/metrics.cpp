#include "spcc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spcc::metrics {

using core::CoordList;
using core::PointCloud;
using core::SparseTensor;

namespace {

double sqDist(const core::VoxelCoord& a, const core::VoxelCoord& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

// Mean over `from` of the given per-point squared error against its nearest
// neighbor in `to`.
template <class ErrFn>
double directionalMean(const CoordList& from, const CoordList& to, ErrFn err) {
  const auto nn = core::knn(from, to, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) acc += err(i, std::size_t(nn[i]));
  return acc / double(from.size());
}

double toPsnr(double mse, double peak) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(3.0 * peak * peak / mse);
}

// Smallest eigenvector of a symmetric 3x3 via cyclic Jacobi rotations.
std::array<double, 3> smallestEigenvector(std::array<std::array<double, 3>, 3> a) {
  std::array<std::array<double, 3>, 3> v = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int sweep = 0; sweep < 32; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-24) break;
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a[p][q]) < 1e-30) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (a[i][i] < a[best][best]) best = i;
  return {v[0][best], v[1][best], v[2][best]};
}

}  // namespace

std::vector<std::array<double, 3>> estimateNormals(const CoordList& points) {
  constexpr int kK = 9;
  std::vector<std::array<double, 3>> normals(points.size(), {0.0, 0.0, 0.0});
  if (points.empty()) return normals;
  const auto nn = core::knn(points, points, kK);
  for (std::size_t i = 0; i < points.size(); ++i) {
    double mx = 0, my = 0, mz = 0;
    for (int j = 0; j < kK; ++j) {
      const auto& p = points[std::size_t(nn[i * kK + std::size_t(j)])];
      mx += p.x;
      my += p.y;
      mz += p.z;
    }
    mx /= kK;
    my /= kK;
    mz /= kK;
    std::array<std::array<double, 3>, 3> cov{};
    for (int j = 0; j < kK; ++j) {
      const auto& p = points[std::size_t(nn[i * kK + std::size_t(j)])];
      const double d[3] = {p.x - mx, p.y - my, p.z - mz};
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cov[r][c] += d[r] * d[c];
    }
    // Rank < 2 (collinear or collapsed neighborhood) has no plane fit.
    double trace = cov[0][0] + cov[1][1] + cov[2][2];
    if (trace < 1e-12) continue;
    auto n = smallestEigenvector(cov);
    const double norm = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (norm < 1e-12) continue;
    // Verify the fit is planar, not a line: the two larger eigenvalues must
    // carry mass. Project out the normal and check remaining spread spans 2D.
    std::array<double, 3> t1{}, t2{};
    // Build an orthonormal tangent basis from n.
    if (std::abs(n[0]) < 0.9)
      t1 = {0.0, -n[2], n[1]};
    else
      t1 = {-n[2], 0.0, n[0]};
    double l1 = std::sqrt(t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]);
    for (auto& v : t1) v /= l1;
    t2 = {n[1] / norm * t1[2] - n[2] / norm * t1[1], n[2] / norm * t1[0] - n[0] / norm * t1[2],
          n[0] / norm * t1[1] - n[1] / norm * t1[0]};
    auto quad = [&](const std::array<double, 3>& t) {
      double s = 0.0;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) s += t[r] * cov[r][c] * t[c];
      return s;
    };
    if (quad(t1) < 1e-12 || quad(t2) < 1e-12) continue;  // line, not plane
    normals[i] = {n[0] / norm, n[1] / norm, n[2] / norm};
  }
  return normals;
}

double psnrD1(const PointCloud& ref, const PointCloud& rec, double peak) {
  if (ref.empty() || rec.empty()) throw std::invalid_argument("psnrD1: empty cloud");
  auto d1 = [&](const CoordList& from, const CoordList& to) {
    return directionalMean(from, to,
                           [&](std::size_t i, std::size_t j) { return sqDist(from[i], to[j]); });
  };
  return toPsnr(std::max(d1(rec.points, ref.points), d1(ref.points, rec.points)), peak);
}

double psnrD2(const PointCloud& ref, const PointCloud& rec, double peak,
              std::size_t* degenerate) {
  if (ref.empty() || rec.empty()) throw std::invalid_argument("psnrD2: empty cloud");
  std::vector<std::array<double, 3>> normals =
      ref.normals.size() == ref.size() ? ref.normals : estimateNormals(ref.points);
  std::size_t degen = 0;
  auto projErr = [&](const core::VoxelCoord& a, const core::VoxelCoord& b,
                     const std::array<double, 3>& n) {
    const double nn = n[0] * n[0] + n[1] * n[1] + n[2] * n[2];
    const double ex = a.x - b.x, ey = a.y - b.y, ez = a.z - b.z;
    if (nn < 0.5) {  // degenerate normal: fall back to the point-to-point error
      ++degen;
      return ex * ex + ey * ey + ez * ez;
    }
    const double d = ex * n[0] + ey * n[1] + ez * n[2];
    return d * d;
  };
  // Both directions project onto the reference-side normal: the normal of the
  // matched ref point for rec->ref, and of the ref point itself for ref->rec.
  const double mseRec = directionalMean(rec.points, ref.points, [&](std::size_t i, std::size_t j) {
    return projErr(rec.points[i], ref.points[j], normals[j]);
  });
  const double mseRef = directionalMean(ref.points, rec.points, [&](std::size_t i, std::size_t j) {
    return projErr(ref.points[i], rec.points[j], normals[i]);
  });
  if (degenerate) *degenerate = degen;
  return toPsnr(std::max(mseRec, mseRef), peak);
}

double bpp(std::size_t streamBytes, std::size_t originalPoints) {
  if (originalPoints == 0) throw std::invalid_argument("bpp: zero points");
  return 8.0 * double(streamBytes) / double(originalPoints);
}

namespace {

struct Curve {
  std::vector<double> x, y;  // strictly increasing x
};

Curve makeCurve(const std::vector<RdPoint>& pts, bool rateOnX) {
  if (pts.size() < 4) throw std::invalid_argument("bdMetrics: need >= 4 points per curve");
  std::vector<std::pair<double, double>> xy;
  for (const auto& p : pts) {
    if (!(p.bpp > 0.0)) throw std::invalid_argument("bdMetrics: bpp must be positive");
    if (!std::isfinite(p.psnrD1)) throw std::invalid_argument("bdMetrics: PSNR must be finite");
    const double lr = std::log10(p.bpp);
    xy.emplace_back(rateOnX ? lr : p.psnrD1, rateOnX ? p.psnrD1 : lr);
  }
  std::sort(xy.begin(), xy.end());
  Curve c;
  for (const auto& [x, y] : xy) {
    if (!c.x.empty() && x <= c.x.back())
      throw std::invalid_argument("bdMetrics: curve not strictly monotone");
    c.x.push_back(x);
    c.y.push_back(y);
  }
  return c;
}

// Fritsch-Carlson monotone cubic Hermite slopes.
std::vector<double> pchipSlopes(const Curve& c) {
  const std::size_t n = c.x.size();
  std::vector<double> h(n - 1), d(n - 1), m(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = c.x[i + 1] - c.x[i];
    d[i] = (c.y[i + 1] - c.y[i]) / h[i];
  }
  m[0] = d[0];
  m[n - 1] = d[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (d[i - 1] * d[i] <= 0.0) {
      m[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
    }
  }
  return m;
}

// Exact integral of the Hermite interpolant over [a, b] within the data range.
double pchipIntegral(const Curve& c, double a, double b) {
  const auto m = pchipSlopes(c);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < c.x.size(); ++i) {
    const double lo = std::max(a, c.x[i]);
    const double hi = std::min(b, c.x[i + 1]);
    if (hi <= lo) continue;
    const double h = c.x[i + 1] - c.x[i];
    // Hermite coefficients on t in [0, 1].
    const double y0 = c.y[i], y1 = c.y[i + 1];
    const double m0 = m[i] * h, m1 = m[i + 1] * h;
    const double c0 = y0;
    const double c1 = m0;
    const double c2 = -3.0 * y0 + 3.0 * y1 - 2.0 * m0 - m1;
    const double c3 = 2.0 * y0 - 2.0 * y1 + m0 + m1;
    auto anti = [&](double t) {
      return h * (c0 * t + c1 * t * t / 2.0 + c2 * t * t * t / 3.0 + c3 * t * t * t * t / 4.0);
    };
    acc += anti((hi - c.x[i]) / h) - anti((lo - c.x[i]) / h);
  }
  return acc;
}

// Least-squares cubic y = sum b_k x^k via 4x4 normal equations.
std::array<double, 4> cubicFit(const Curve& c) {
  double s[7] = {};
  double t[4] = {};
  for (std::size_t i = 0; i < c.x.size(); ++i) {
    double xp = 1.0;
    for (int k = 0; k < 7; ++k, xp *= c.x[i]) s[k] += xp;
    xp = 1.0;
    for (int k = 0; k < 4; ++k, xp *= c.x[i]) t[k] += xp * c.y[i];
  }
  double a[4][5];
  for (int r = 0; r < 4; ++r) {
    for (int col = 0; col < 4; ++col) a[r][col] = s[r + col];
    a[r][4] = t[r];
  }
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    if (std::abs(a[col][col]) < 1e-14) throw std::runtime_error("bdMetrics: singular cubic fit");
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int k = col; k < 5; ++k) a[r][k] -= f * a[col][k];
    }
  }
  return {a[0][4] / a[0][0], a[1][4] / a[1][1], a[2][4] / a[2][2], a[3][4] / a[3][3]};
}

double cubicIntegral(const std::array<double, 4>& b, double lo, double hi) {
  auto anti = [&](double x) {
    return b[0] * x + b[1] * x * x / 2.0 + b[2] * x * x * x / 3.0 + b[3] * x * x * x * x / 4.0;
  };
  return anti(hi) - anti(lo);
}

// Average difference of curveB - curveA over the overlapping x range, for one
// fitting scheme.
struct AvgDiff {
  double pchip = 0.0;
  double poly = 0.0;
};
AvgDiff averageDiff(const Curve& a, const Curve& b) {
  const double lo = std::max(a.x.front(), b.x.front());
  const double hi = std::min(a.x.back(), b.x.back());
  if (!(hi > lo)) throw std::invalid_argument("bdMetrics: curves do not overlap");
  AvgDiff out;
  out.pchip = (pchipIntegral(b, lo, hi) - pchipIntegral(a, lo, hi)) / (hi - lo);
  out.poly = (cubicIntegral(cubicFit(b), lo, hi) - cubicIntegral(cubicFit(a), lo, hi)) / (hi - lo);
  return out;
}

}  // namespace

BdResult bdMetrics(const std::vector<RdPoint>& curveA, const std::vector<RdPoint>& curveB) {
  // BD-rate: log-rate as a function of PSNR.
  const auto rd = averageDiff(makeCurve(curveA, false), makeCurve(curveB, false));
  // BD-PSNR: PSNR as a function of log-rate.
  const auto pd = averageDiff(makeCurve(curveA, true), makeCurve(curveB, true));
  BdResult out;
  out.bdRate = (std::pow(10.0, rd.pchip) - 1.0) * 100.0;
  out.bdRatePoly = (std::pow(10.0, rd.poly) - 1.0) * 100.0;
  out.bdPsnr = pd.pchip;
  out.bdPsnrPoly = pd.poly;
  return out;
}

namespace {

double cosineRows(const Mat& a, std::size_t i, const Mat& b, std::size_t j) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t c = 0; c < a.cols; ++c) {
    dot += a.at(i, c) * b.at(j, c);
    na += a.at(i, c) * a.at(i, c);
    nb += b.at(j, c) * b.at(j, c);
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  if (denom < 1e-30) return 0.0;
  return std::clamp(dot / denom, -1.0, 1.0);
}

}  // namespace

SimilarityMatrix cosineMatrix(const std::array<SparseTensor, 5>& latentsS,
                              const std::array<SparseTensor, 5>& latentsT, int sfS, int sfT) {
  SimilarityMatrix out;
  out.sfS = sfS;
  out.sfT = sfT;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const SparseTensor& a = latentsS[std::size_t(i)];
      const SparseTensor& b = latentsT[std::size_t(j)];
      if (a.empty() || b.empty()) continue;
      double acc = 0.0;
      std::size_t count = 0;
      if (sfS == sfT) {
        // Exact coordinate intersection over two sorted lists.
        std::size_t ia = 0, ib = 0;
        while (ia < a.size() && ib < b.size()) {
          if (a.coords[ia] < b.coords[ib]) {
            ++ia;
          } else if (b.coords[ib] < a.coords[ia]) {
            ++ib;
          } else {
            acc += cosineRows(a.features, ia, b.features, ib);
            ++count;
            ++ia;
            ++ib;
          }
        }
      } else {
        // Lift the coarser grid to the finer one and average over neighbors
        // within Euclidean radius 2.
        const bool aCoarse = sfS > sfT;
        const SparseTensor& coarse = aCoarse ? a : b;
        const SparseTensor& fine = aCoarse ? b : a;
        const int ratio = aCoarse ? sfS / sfT : sfT / sfS;
        const CoordList lifted = core::upscaleCoords(coarse.coords, ratio);
        for (std::size_t ic = 0; ic < lifted.size(); ++ic) {
          for (std::size_t jf = 0; jf < fine.size(); ++jf) {
            if (sqDist(lifted[ic], fine.coords[jf]) <= 4.0) {
              acc += cosineRows(coarse.features, ic, fine.features, jf);
              ++count;
            }
          }
        }
      }
      if (count) {
        out.value[std::size_t(i)][std::size_t(j)] = acc / double(count);
        out.present[std::size_t(i)][std::size_t(j)] = true;
      }
    }
  }
  return out;
}

}  // namespace spcc::metrics
