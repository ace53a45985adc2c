#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "spcc/mat.hpp"

namespace spcc::nn {

enum class Init { He, Zero };

// Named dense weights with matching gradient slots and Adam state. All
// initialization is a pure function of (rngSeed, name), so weight values do
// not depend on creation order.
struct ParamStore {
  struct Entry {
    Mat w, g, m, v;
  };
  std::map<std::string, Entry> entries;
  std::map<std::string, std::string> metadata;
  std::uint64_t rngSeed = 0;
  std::int64_t adamStep = 0;

  Mat& ensure(const std::string& name, std::size_t rows, std::size_t cols, Init init);
  bool has(const std::string& name) const { return entries.count(name) != 0; }
  void zeroGrad();
  double gradNorm() const;

  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);
};

void adamStep(ParamStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8);

// Reverse-mode tape over dense matrices. One tape per forward/backward pass.
class Tape {
 public:
  using Var = std::int32_t;

  Var input(Mat v);
  Var param(ParamStore& store, const std::string& name, std::size_t rows, std::size_t cols,
            Init init);

  const Mat& value(Var v) const { return nodes_[std::size_t(v)].value; }
  const Mat& grad(Var v) const { return nodes_[std::size_t(v)].grad; }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var addRowBroadcast(Var a, Var bias);  // bias is 1 x C
  Var relu(Var a);
  Var sigmoid(Var a);
  // softplus(x) + floor, used for scale heads that must stay >= floor
  Var softplusFloor(Var a, double floor);
  Var concatCols(Var a, Var b);
  Var sliceCols(Var a, std::size_t begin, std::size_t end);
  Var gatherRows(Var a, std::vector<std::int32_t> idx);
  // out[idx[i], :] += a[i, :]
  Var scatterAddRows(Var a, std::vector<std::int32_t> idx, std::size_t outRows);
  Var repeatRow(Var a, std::size_t n);  // a is 1 x C
  // Softmax over consecutive row groups of size `group`, per column.
  Var groupSoftmax(Var a, std::size_t group);
  Var groupSum(Var a, std::size_t group);
  // round + clamp with straight-through gradient
  Var roundClampST(Var a, double lo, double hi);
  Var sumAll(Var a);    // 1 x 1
  Var meanAll(Var a);   // 1 x 1

  // Mean focal loss over a single-channel probability column.
  Var focalLoss(Var probs, std::vector<std::uint8_t> labels, double alpha, double gamma);
  // Sum over entries of -log2(Phi((v - mu + .5)/sigma) - Phi((v - mu - .5)/sigma)).
  Var gaussianNllBits(Var v, Var mu, Var sigma);
  // Sum of -log2 softmax(logits[chan])[bin] per element; gradients reach the
  // logits only (the binned values are already integers).
  Var histogramRateBits(Var logits, std::vector<std::int32_t> bins,
                        std::vector<std::int32_t> chans);

  void backward(Var loss);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;  // empty for leaves
  };
  std::vector<Node> nodes_;

  Var push(Mat value, std::function<void()> back = {});
  Mat& gradRef(Var v) { return nodes_[std::size_t(v)].grad; }
};

}  // namespace spcc::nn
