#include "spcc/synthdata.hpp"

#include <cmath>
#include <random>

namespace spcc::synth {

using core::CoordList;
using core::PointCloud;
using core::VoxelCoord;

namespace {
VoxelCoord voxelize(double x, double y, double z, int grid) {
  auto clampi = [grid](double v) {
    const int i = int(std::lround(v));
    return std::int32_t(std::clamp(i, 0, grid - 1));
  };
  return {clampi(x), clampi(y), clampi(z)};
}
}  // namespace

PointCloud sphere(std::uint64_t seed, int grid, double radius, double noise) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, noise);
  const double c = 0.5 * (grid - 1);
  const std::size_t samples = std::size_t(40.0 * radius * radius);
  PointCloud pc;
  for (std::size_t i = 0; i < samples; ++i) {
    double dx = nd(rng), dy = nd(rng), dz = nd(rng);
    const double n = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (n < 1e-9) continue;
    const double r = radius + (noise > 0.0 ? jitter(rng) : 0.0);
    pc.points.push_back(voxelize(c + r * dx / n, c + r * dy / n, c + r * dz / n, grid));
  }
  core::canonicalize(pc.points);
  return pc;
}

PointCloud plane(std::uint64_t seed, int grid, double noise) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, double(grid - 1));
  std::normal_distribution<double> jitter(0.0, noise);
  // Random plane through the grid center, spanned by two unit vectors.
  double nx = nd(rng), ny = nd(rng), nz = nd(rng) + 1e-3;
  const double nn = std::sqrt(nx * nx + ny * ny + nz * nz);
  nx /= nn;
  ny /= nn;
  nz /= nn;
  // Orthonormal basis of the plane.
  double ux = -ny, uy = nx, uz = 0.0;
  double un = std::sqrt(ux * ux + uy * uy);
  if (un < 1e-6) {
    ux = 1.0;
    uy = 0.0;
    un = 1.0;
  }
  ux /= un;
  uy /= un;
  const double vx = ny * uz - nz * uy, vy = nz * ux - nx * uz, vz = nx * uy - ny * ux;
  const double c = 0.5 * (grid - 1);
  const std::size_t samples = std::size_t(4.0 * grid * grid);
  PointCloud pc;
  for (std::size_t i = 0; i < samples; ++i) {
    const double a = ud(rng) - c, b = ud(rng) - c;
    const double off = noise > 0.0 ? jitter(rng) : 0.0;
    const double x = c + a * ux + b * vx + off * nx;
    const double y = c + a * uy + b * vy + off * ny;
    const double z = c + a * uz + b * vz + off * nz;
    if (x < 0 || y < 0 || z < 0 || x > grid - 1 || y > grid - 1 || z > grid - 1) continue;
    pc.points.push_back(voxelize(x, y, z, grid));
  }
  core::canonicalize(pc.points);
  return pc;
}

PointCloud noisyMesh(std::uint64_t seed, int grid, int triangles, double noise) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(0.0, double(grid - 1));
  std::normal_distribution<double> jitter(0.0, noise);
  PointCloud pc;
  for (int tri = 0; tri < triangles; ++tri) {
    double ax = ud(rng), ay = ud(rng), az = ud(rng);
    double bx = ud(rng), by = ud(rng), bz = ud(rng);
    double cx = ud(rng), cy = ud(rng), cz = ud(rng);
    const double area =
        0.5 * std::sqrt(std::pow((by - ay) * (cz - az) - (bz - az) * (cy - ay), 2) +
                        std::pow((bz - az) * (cx - ax) - (bx - ax) * (cz - az), 2) +
                        std::pow((bx - ax) * (cy - ay) - (by - ay) * (cx - ax), 2));
    const std::size_t samples = std::size_t(std::max(8.0, 4.0 * area));
    std::uniform_real_distribution<double> bary(0.0, 1.0);
    for (std::size_t i = 0; i < samples; ++i) {
      double u = bary(rng), v = bary(rng);
      if (u + v > 1.0) {
        u = 1.0 - u;
        v = 1.0 - v;
      }
      const double w = 1.0 - u - v;
      double x = w * ax + u * bx + v * cx;
      double y = w * ay + u * by + v * cy;
      double z = w * az + u * bz + v * cz;
      if (noise > 0.0) {
        x += jitter(rng);
        y += jitter(rng);
        z += jitter(rng);
      }
      x = std::clamp(x, 0.0, double(grid - 1));
      y = std::clamp(y, 0.0, double(grid - 1));
      z = std::clamp(z, 0.0, double(grid - 1));
      pc.points.push_back(voxelize(x, y, z, grid));
    }
  }
  core::canonicalize(pc.points);
  return pc;
}

std::vector<PointCloud> corpus(std::uint64_t seed, int count, int grid) {
  std::vector<PointCloud> out;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed * 1000003ull + std::uint64_t(i);
    switch (i % 3) {
      case 0:
        out.push_back(sphere(s, grid, 0.35 * grid, 0.4));
        break;
      case 1:
        out.push_back(plane(s, grid, 0.4));
        break;
      default:
        out.push_back(noisyMesh(s, grid, 3, 0.3));
        break;
    }
  }
  return out;
}

}  // namespace spcc::synth
