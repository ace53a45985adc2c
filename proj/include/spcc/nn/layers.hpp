#pragma once

#include <string>
#include <vector>

#include "spcc/core.hpp"
#include "spcc/nn/autodiff.hpp"

namespace spcc::nn {

struct SparseConvSpec {
  int kernelSize = 3;  // 3 => offsets in {-1,0,1}^3; transposed uses {0,1}^3
  int stride = 1;      // 1 or 2
  std::size_t inCh = 1;
  std::size_t outCh = 1;
  bool transposed = false;
};

// Sparse tensors split into coordinates (outside the tape) and a feature var.
struct SparseVar {
  core::CoordList coords;
  Tape::Var features = -1;
};

// Per-row affine map (a 1x1x1 convolution).
Tape::Var linear(Tape& t, ParamStore& p, const std::string& prefix, Tape::Var x,
                 std::size_t inCh, std::size_t outCh);

// Affine + ReLU stack; the last layer stays linear.
Tape::Var mlp(Tape& t, ParamStore& p, const std::string& prefix, Tape::Var x,
              const std::vector<std::size_t>& widths);

SparseVar sparseConv(Tape& t, ParamStore& p, const std::string& prefix, const SparseVar& x,
                     const SparseConvSpec& spec);

// Two-path residual block, channel count preserved (must be even).
SparseVar inceptionResBlock(Tape& t, ParamStore& p, const std::string& prefix, const SparseVar& x,
                            std::size_t ch);

// PTv2-style vector attention: keys/values from `a`, queries from `b`,
// per-channel softmax over the 5 nearest neighbors, residual update of `b`.
// Output coordinates are exactly b.coords.
SparseVar vectorAttention(Tape& t, ParamStore& p, const std::string& prefix, const SparseVar& a,
                          const SparseVar& b, std::size_t width, std::size_t attnDim,
                          int neighbors = 5);

}  // namespace spcc::nn
