#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace spcc {

// Row-major dense matrix of doubles. All arithmetic in the project runs in
// 64-bit reals so that gradient checks and cross-run determinism hold.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> d;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), d(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) {
    assert(r < rows && c < cols);
    return d[r * cols + c];
  }
  double at(std::size_t r, std::size_t c) const {
    assert(r < rows && c < cols);
    return d[r * cols + c];
  }
  double* row(std::size_t r) { return d.data() + r * cols; }
  const double* row(std::size_t r) const { return d.data() + r * cols; }
  std::size_t size() const { return d.size(); }
  bool sameShape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  static Mat zerosLike(const Mat& o) { return Mat(o.rows, o.cols); }
};

}  // namespace spcc
