#include "spcc/nn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "spcc/simd/kernels.hpp"

namespace spcc::nn {

namespace {
constexpr double kLn2 = 0.6931471805599453;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double stdNormalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double stdNormalPdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

Mat& ParamStore::ensure(const std::string& name, std::size_t rows, std::size_t cols, Init init) {
  auto it = entries.find(name);
  if (it != entries.end()) {
    if (it->second.w.rows != rows || it->second.w.cols != cols)
      throw std::invalid_argument("ParamStore: shape mismatch for " + name);
    return it->second.w;
  }
  Entry e;
  e.w = Mat(rows, cols);
  e.g = Mat(rows, cols);
  e.m = Mat(rows, cols);
  e.v = Mat(rows, cols);
  if (init == Init::He) {
    std::mt19937_64 rng(rngSeed ^ fnv1a(name));
    const double limit = std::sqrt(6.0 / double(rows));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& x : e.w.d) x = dist(rng);
  }
  return entries.emplace(name, std::move(e)).first->second.w;
}

void ParamStore::zeroGrad() {
  for (auto& [name, e] : entries) std::fill(e.g.d.begin(), e.g.d.end(), 0.0);
}

double ParamStore::gradNorm() const {
  double acc = 0.0;
  for (const auto& [name, e] : entries) acc += simd::dot(e.g.d.data(), e.g.d.data(), e.g.size());
  return std::sqrt(acc);
}

namespace {
constexpr char kMagic[4] = {'S', 'P', 'C', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void writeRaw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
template <typename T>
T readRaw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("ParamStore: truncated file");
  return v;
}
void writeString(std::ostream& os, const std::string& s) {
  writeRaw<std::uint32_t>(os, std::uint32_t(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}
std::string readString(std::istream& is) {
  auto n = readRaw<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), std::streamsize(n));
  if (!is) throw std::runtime_error("ParamStore: truncated file");
  return s;
}
}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("ParamStore: cannot open " + path);
  os.write(kMagic, 4);
  writeRaw<std::uint32_t>(os, kVersion);
  writeRaw<std::uint64_t>(os, rngSeed);
  writeRaw<std::uint32_t>(os, std::uint32_t(entries.size()));
  for (const auto& [name, e] : entries) {
    writeString(os, name);
    writeRaw<std::uint32_t>(os, 2);  // rank
    writeRaw<std::uint32_t>(os, std::uint32_t(e.w.rows));
    writeRaw<std::uint32_t>(os, std::uint32_t(e.w.cols));
    os.write(reinterpret_cast<const char*>(e.w.d.data()),
             std::streamsize(e.w.d.size() * sizeof(double)));
  }
  writeRaw<std::uint32_t>(os, std::uint32_t(metadata.size()));
  for (const auto& [k, v] : metadata) {
    writeString(os, k);
    writeString(os, v);
  }
  if (!os) throw std::runtime_error("ParamStore: write failed for " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("ParamStore: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || !std::equal(magic, magic + 4, kMagic))
    throw std::runtime_error("ParamStore: bad magic in " + path);
  if (readRaw<std::uint32_t>(is) != kVersion)
    throw std::runtime_error("ParamStore: unsupported version in " + path);
  ParamStore store;
  store.rngSeed = readRaw<std::uint64_t>(is);
  const auto count = readRaw<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = readString(is);
    const auto rank = readRaw<std::uint32_t>(is);
    if (rank != 2) throw std::runtime_error("ParamStore: unsupported tensor rank");
    const auto rows = readRaw<std::uint32_t>(is);
    const auto cols = readRaw<std::uint32_t>(is);
    Entry e;
    e.w = Mat(rows, cols);
    e.g = Mat(rows, cols);
    e.m = Mat(rows, cols);
    e.v = Mat(rows, cols);
    is.read(reinterpret_cast<char*>(e.w.d.data()), std::streamsize(e.w.d.size() * sizeof(double)));
    if (!is) throw std::runtime_error("ParamStore: truncated tensor data");
    store.entries.emplace(std::move(name), std::move(e));
  }
  const auto metaCount = readRaw<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < metaCount; ++i) {
    std::string k = readString(is);
    store.metadata[k] = readString(is);
  }
  return store;
}

void adamStep(ParamStore& params, double lr, double beta1, double beta2, double eps) {
  params.adamStep += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(params.adamStep));
  const double bc2 = 1.0 - std::pow(beta2, double(params.adamStep));
  for (auto& [name, e] : params.entries) {
    for (std::size_t i = 0; i < e.w.size(); ++i) {
      const double g = e.g.d[i];
      e.m.d[i] = beta1 * e.m.d[i] + (1.0 - beta1) * g;
      e.v.d[i] = beta2 * e.v.d[i] + (1.0 - beta2) * g * g;
      e.w.d[i] -= lr * (e.m.d[i] / bc1) / (std::sqrt(e.v.d[i] / bc2) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Tape

Tape::Var Tape::push(Mat value, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.grad = Mat(n.value.rows, n.value.cols);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

Tape::Var Tape::input(Mat v) { return push(std::move(v)); }

Tape::Var Tape::param(ParamStore& store, const std::string& name, std::size_t rows,
                      std::size_t cols, Init init) {
  Mat& w = store.ensure(name, rows, cols, init);
  Var v = push(w);
  Mat* g = &store.entries.at(name).g;
  nodes_[std::size_t(v)].back = [this, v, g]() {
    const Mat& dv = nodes_[std::size_t(v)].grad;
    simd::add(g->d.data(), dv.d.data(), g->d.data(), g->size());
  };
  return v;
}

Tape::Var Tape::matmul(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols != B.rows) throw std::invalid_argument("matmul: shape mismatch");
  Mat C(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t k = 0; k < A.cols; ++k)
      simd::axpy(A.at(i, k), B.row(k), C.row(i), B.cols);
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, b, out]() {
    const Mat& g = grad(out);
    const Mat& A = value(a);
    const Mat& B = value(b);
    Mat& ga = gradRef(a);
    Mat& gb = gradRef(b);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t k = 0; k < A.cols; ++k) {
        ga.at(i, k) += simd::dot(g.row(i), B.row(k), B.cols);
        simd::axpy(A.at(i, k), g.row(i), gb.row(k), B.cols);
      }
  };
  return out;
}

Tape::Var Tape::add(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (!A.sameShape(B)) throw std::invalid_argument("add: shape mismatch");
  Mat C(A.rows, A.cols);
  simd::add(A.d.data(), B.d.data(), C.d.data(), C.size());
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, b, out]() {
    const Mat& g = grad(out);
    simd::add(gradRef(a).d.data(), g.d.data(), gradRef(a).d.data(), g.size());
    simd::add(gradRef(b).d.data(), g.d.data(), gradRef(b).d.data(), g.size());
  };
  return out;
}

Tape::Var Tape::sub(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (!A.sameShape(B)) throw std::invalid_argument("sub: shape mismatch");
  Mat C(A.rows, A.cols);
  simd::sub(A.d.data(), B.d.data(), C.d.data(), C.size());
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, b, out]() {
    const Mat& g = grad(out);
    simd::add(gradRef(a).d.data(), g.d.data(), gradRef(a).d.data(), g.size());
    simd::axpy(-1.0, g.d.data(), gradRef(b).d.data(), g.size());
  };
  return out;
}

Tape::Var Tape::mul(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (!A.sameShape(B)) throw std::invalid_argument("mul: shape mismatch");
  Mat C(A.rows, A.cols);
  simd::mul(A.d.data(), B.d.data(), C.d.data(), C.size());
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, b, out]() {
    const Mat& g = grad(out);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gradRef(a).d[i] += g.d[i] * value(b).d[i];
      gradRef(b).d[i] += g.d[i] * value(a).d[i];
    }
  };
  return out;
}

Tape::Var Tape::scale(Var a, double s) {
  const Mat& A = value(a);
  Mat C(A.rows, A.cols);
  simd::scale(s, A.d.data(), C.d.data(), C.size());
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, s, out]() {
    simd::axpy(s, grad(out).d.data(), gradRef(a).d.data(), grad(out).size());
  };
  return out;
}

Tape::Var Tape::addRowBroadcast(Var a, Var bias) {
  const Mat& A = value(a);
  const Mat& B = value(bias);
  if (B.rows != 1 || B.cols != A.cols) throw std::invalid_argument("addRowBroadcast: bad bias");
  Mat C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) simd::add(A.row(i), B.row(0), C.row(i), A.cols);
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, bias, out]() {
    const Mat& g = grad(out);
    simd::add(gradRef(a).d.data(), g.d.data(), gradRef(a).d.data(), g.size());
    for (std::size_t i = 0; i < g.rows; ++i)
      simd::add(gradRef(bias).row(0), g.row(i), gradRef(bias).row(0), g.cols);
  };
  return out;
}

Tape::Var Tape::relu(Var a) {
  const Mat& A = value(a);
  Mat C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) C.d[i] = A.d[i] > 0.0 ? A.d[i] : 0.0;
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, out]() {
    const Mat& g = grad(out);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (value(a).d[i] > 0.0) gradRef(a).d[i] += g.d[i];
  };
  return out;
}

Tape::Var Tape::sigmoid(Var a) {
  const Mat& A = value(a);
  Mat C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) C.d[i] = 1.0 / (1.0 + std::exp(-A.d[i]));
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, out]() {
    const Mat& g = grad(out);
    const Mat& y = value(out);
    for (std::size_t i = 0; i < g.size(); ++i)
      gradRef(a).d[i] += g.d[i] * y.d[i] * (1.0 - y.d[i]);
  };
  return out;
}

Tape::Var Tape::softplusFloor(Var a, double floor) {
  const Mat& A = value(a);
  Mat C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double x = A.d[i];
    C.d[i] = floor + (x > 30.0 ? x : std::log1p(std::exp(x)));
  }
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, out]() {
    const Mat& g = grad(out);
    for (std::size_t i = 0; i < g.size(); ++i)
      gradRef(a).d[i] += g.d[i] / (1.0 + std::exp(-value(a).d[i]));
  };
  return out;
}

Tape::Var Tape::concatCols(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows != B.rows) throw std::invalid_argument("concatCols: row mismatch");
  Mat C(A.rows, A.cols + B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    std::copy(A.row(i), A.row(i) + A.cols, C.row(i));
    std::copy(B.row(i), B.row(i) + B.cols, C.row(i) + A.cols);
  }
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, b, out]() {
    const Mat& g = grad(out);
    Mat& ga = gradRef(a);
    Mat& gb = gradRef(b);
    for (std::size_t i = 0; i < g.rows; ++i) {
      simd::add(ga.row(i), g.row(i), ga.row(i), ga.cols);
      simd::add(gb.row(i), g.row(i) + ga.cols, gb.row(i), gb.cols);
    }
  };
  return out;
}

Tape::Var Tape::sliceCols(Var a, std::size_t begin, std::size_t end) {
  const Mat& A = value(a);
  if (begin >= end || end > A.cols) throw std::invalid_argument("sliceCols: bad range");
  Mat C(A.rows, end - begin);
  for (std::size_t i = 0; i < A.rows; ++i)
    std::copy(A.row(i) + begin, A.row(i) + end, C.row(i));
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, begin, out]() {
    const Mat& g = grad(out);
    Mat& ga = gradRef(a);
    for (std::size_t i = 0; i < g.rows; ++i)
      simd::add(ga.row(i) + begin, g.row(i), ga.row(i) + begin, g.cols);
  };
  return out;
}

Tape::Var Tape::gatherRows(Var a, std::vector<std::int32_t> idx) {
  const Mat& A = value(a);
  Mat C(idx.size(), A.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || std::size_t(idx[i]) >= A.rows)
      throw std::invalid_argument("gatherRows: index out of range");
    std::copy(A.row(std::size_t(idx[i])), A.row(std::size_t(idx[i])) + A.cols, C.row(i));
  }
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, idx = std::move(idx), out]() {
    const Mat& g = grad(out);
    Mat& ga = gradRef(a);
    for (std::size_t i = 0; i < idx.size(); ++i)
      simd::add(ga.row(std::size_t(idx[i])), g.row(i), ga.row(std::size_t(idx[i])), g.cols);
  };
  return out;
}

Tape::Var Tape::scatterAddRows(Var a, std::vector<std::int32_t> idx, std::size_t outRows) {
  const Mat& A = value(a);
  if (idx.size() != A.rows) throw std::invalid_argument("scatterAddRows: index count mismatch");
  Mat C(outRows, A.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || std::size_t(idx[i]) >= outRows)
      throw std::invalid_argument("scatterAddRows: index out of range");
    simd::add(C.row(std::size_t(idx[i])), A.row(i), C.row(std::size_t(idx[i])), A.cols);
  }
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, idx = std::move(idx), out]() {
    const Mat& g = grad(out);
    Mat& ga = gradRef(a);
    for (std::size_t i = 0; i < idx.size(); ++i)
      simd::add(ga.row(i), g.row(std::size_t(idx[i])), ga.row(i), ga.cols);
  };
  return out;
}

Tape::Var Tape::repeatRow(Var a, std::size_t n) {
  const Mat& A = value(a);
  if (A.rows != 1) throw std::invalid_argument("repeatRow: input must be a single row");
  Mat C(n, A.cols);
  for (std::size_t i = 0; i < n; ++i) std::copy(A.row(0), A.row(0) + A.cols, C.row(i));
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, out]() {
    const Mat& g = grad(out);
    Mat& ga = gradRef(a);
    for (std::size_t i = 0; i < g.rows; ++i) simd::add(ga.row(0), g.row(i), ga.row(0), g.cols);
  };
  return out;
}

Tape::Var Tape::groupSoftmax(Var a, std::size_t group) {
  const Mat& A = value(a);
  if (group == 0 || A.rows % group != 0) throw std::invalid_argument("groupSoftmax: bad group");
  Mat C(A.rows, A.cols);
  const std::size_t groups = A.rows / group;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t c = 0; c < A.cols; ++c) {
      double mx = A.at(g * group, c);
      for (std::size_t r = 1; r < group; ++r) mx = std::max(mx, A.at(g * group + r, c));
      double denom = 0.0;
      for (std::size_t r = 0; r < group; ++r) {
        const double e = std::exp(A.at(g * group + r, c) - mx);
        C.at(g * group + r, c) = e;
        denom += e;
      }
      for (std::size_t r = 0; r < group; ++r) C.at(g * group + r, c) /= denom;
    }
  }
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, group, out]() {
    const Mat& g = grad(out);
    const Mat& y = value(out);
    Mat& ga = gradRef(a);
    const std::size_t groups = g.rows / group;
    for (std::size_t gi = 0; gi < groups; ++gi) {
      for (std::size_t c = 0; c < g.cols; ++c) {
        double dotv = 0.0;
        for (std::size_t r = 0; r < group; ++r)
          dotv += g.at(gi * group + r, c) * y.at(gi * group + r, c);
        for (std::size_t r = 0; r < group; ++r)
          ga.at(gi * group + r, c) +=
              y.at(gi * group + r, c) * (g.at(gi * group + r, c) - dotv);
      }
    }
  };
  return out;
}

Tape::Var Tape::groupSum(Var a, std::size_t group) {
  const Mat& A = value(a);
  if (group == 0 || A.rows % group != 0) throw std::invalid_argument("groupSum: bad group");
  const std::size_t groups = A.rows / group;
  Mat C(groups, A.cols);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t r = 0; r < group; ++r) simd::add(C.row(g), A.row(g * group + r), C.row(g), A.cols);
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, group, out]() {
    const Mat& g = grad(out);
    Mat& ga = gradRef(a);
    for (std::size_t gi = 0; gi < g.rows; ++gi)
      for (std::size_t r = 0; r < group; ++r)
        simd::add(ga.row(gi * group + r), g.row(gi), ga.row(gi * group + r), g.cols);
  };
  return out;
}

Tape::Var Tape::roundClampST(Var a, double lo, double hi) {
  const Mat& A = value(a);
  Mat C(A.rows, A.cols);
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double x = A.d[i];
    const double r = x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5);
    C.d[i] = std::clamp(r, lo, hi);
  }
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, out]() {
    simd::add(gradRef(a).d.data(), grad(out).d.data(), gradRef(a).d.data(), grad(out).size());
  };
  return out;
}

Tape::Var Tape::sumAll(Var a) {
  Mat C(1, 1);
  C.d[0] = simd::sum(value(a).d.data(), value(a).size());
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, out]() {
    const double g = grad(out).d[0];
    for (double& x : gradRef(a).d) x += g;
  };
  return out;
}

Tape::Var Tape::meanAll(Var a) {
  const double n = double(value(a).size());
  Mat C(1, 1);
  C.d[0] = simd::sum(value(a).d.data(), value(a).size()) / n;
  Var out = push(std::move(C));
  nodes_.back().back = [this, a, n, out]() {
    const double g = grad(out).d[0] / n;
    for (double& x : gradRef(a).d) x += g;
  };
  return out;
}

Tape::Var Tape::focalLoss(Var probs, std::vector<std::uint8_t> labels, double alpha,
                          double gamma) {
  const Mat& P = value(probs);
  if (P.cols != 1 || P.rows != labels.size())
    throw std::invalid_argument("focalLoss: need one probability per label");
  constexpr double eps = 1e-6;
  const std::size_t n = labels.size();
  Mat C(1, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(P.d[i], eps, 1.0 - eps);
    const double pt = labels[i] ? p : 1.0 - p;
    const double at = labels[i] ? alpha : 1.0 - alpha;
    acc += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  C.d[0] = acc / double(n);
  Var out = push(std::move(C));
  nodes_.back().back = [this, probs, labels = std::move(labels), alpha, gamma, out]() {
    constexpr double eps = 1e-6;
    const double g = grad(out).d[0] / double(labels.size());
    const Mat& P = value(probs);
    Mat& gp = gradRef(probs);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double raw = P.d[i];
      if (raw <= eps || raw >= 1.0 - eps) continue;  // clamped region
      const double pt = labels[i] ? raw : 1.0 - raw;
      const double at = labels[i] ? alpha : 1.0 - alpha;
      const double onemt = 1.0 - pt;
      double dpt = -at * (std::pow(onemt, gamma) / pt -
                          (gamma > 0.0 ? gamma * std::pow(onemt, gamma - 1.0) * std::log(pt) : 0.0));
      gp.d[i] += g * (labels[i] ? dpt : -dpt);
    }
  };
  return out;
}

Tape::Var Tape::gaussianNllBits(Var v, Var mu, Var sigma) {
  const Mat& V = value(v);
  const Mat& M = value(mu);
  const Mat& S = value(sigma);
  if (!V.sameShape(M) || !V.sameShape(S))
    throw std::invalid_argument("gaussianNllBits: shape mismatch");
  constexpr double pMin = 1e-12;
  Mat C(1, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < V.size(); ++i) {
    const double a = (V.d[i] - M.d[i] - 0.5) / S.d[i];
    const double b = (V.d[i] - M.d[i] + 0.5) / S.d[i];
    acc += -std::log2(std::max(stdNormalCdf(b) - stdNormalCdf(a), pMin));
  }
  C.d[0] = acc;
  Var out = push(std::move(C));
  nodes_.back().back = [this, v, mu, sigma, out]() {
    constexpr double pMin = 1e-12;
    const double g = grad(out).d[0];
    const Mat& V = value(v);
    const Mat& M = value(mu);
    const Mat& S = value(sigma);
    Mat& gv = gradRef(v);
    Mat& gm = gradRef(mu);
    Mat& gs = gradRef(sigma);
    for (std::size_t i = 0; i < V.size(); ++i) {
      const double s = S.d[i];
      const double a = (V.d[i] - M.d[i] - 0.5) / s;
      const double b = (V.d[i] - M.d[i] + 0.5) / s;
      const double p = std::max(stdNormalCdf(b) - stdNormalCdf(a), pMin);
      const double pa = stdNormalPdf(a);
      const double pb = stdNormalPdf(b);
      const double common = -g / (p * kLn2);
      // dP/dv = (pb - pa)/s, dP/dmu = (pa - pb)/s, dP/dsigma = (a*pa - b*pb)/s
      gv.d[i] += common * (pb - pa) / s;
      gm.d[i] += common * (pa - pb) / s;
      gs.d[i] += common * (a * pa - b * pb) / s;
    }
  };
  return out;
}

Tape::Var Tape::histogramRateBits(Var logits, std::vector<std::int32_t> bins,
                                  std::vector<std::int32_t> chans) {
  const Mat& L = value(logits);
  if (bins.size() != chans.size()) throw std::invalid_argument("histogramRateBits: length mismatch");
  // Per-channel log-softmax, computed once.
  Mat logp(L.rows, L.cols);
  for (std::size_t c = 0; c < L.rows; ++c) {
    double mx = L.at(c, 0);
    for (std::size_t j = 1; j < L.cols; ++j) mx = std::max(mx, L.at(c, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < L.cols; ++j) denom += std::exp(L.at(c, j) - mx);
    const double lse = mx + std::log(denom);
    for (std::size_t j = 0; j < L.cols; ++j) logp.at(c, j) = L.at(c, j) - lse;
  }
  Mat C(1, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (chans[i] < 0 || std::size_t(chans[i]) >= L.rows || bins[i] < 0 ||
        std::size_t(bins[i]) >= L.cols)
      throw std::invalid_argument("histogramRateBits: index out of range");
    acc += -logp.at(std::size_t(chans[i]), std::size_t(bins[i])) / kLn2;
  }
  C.d[0] = acc;
  Var out = push(std::move(C));
  nodes_.back().back = [this, logits, bins = std::move(bins), chans = std::move(chans),
                        logp = std::move(logp), out]() {
    const double g = grad(out).d[0];
    Mat& gl = gradRef(logits);
    // Count hits per channel, then d/dlogits = (hits_c * softmax - onehot)/ln2.
    std::vector<double> hits(gl.rows, 0.0);
    for (std::size_t i = 0; i < chans.size(); ++i) hits[std::size_t(chans[i])] += 1.0;
    for (std::size_t c = 0; c < gl.rows; ++c) {
      if (hits[c] == 0.0) continue;
      for (std::size_t j = 0; j < gl.cols; ++j)
        gl.at(c, j) += g * hits[c] * std::exp(logp.at(c, j)) / kLn2;
    }
    for (std::size_t i = 0; i < bins.size(); ++i)
      gl.at(std::size_t(chans[i]), std::size_t(bins[i])) -= g / kLn2;
  };
  return out;
}

void Tape::backward(Var loss) {
  Mat& g = gradRef(loss);
  if (g.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  g.d[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;)
    if (nodes_[i].back) nodes_[i].back();
}

}  // namespace spcc::nn
