#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <vector>

#include "spcc/simd/kernels.hpp"

using namespace spcc;

namespace {
std::vector<double> randomVec(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}
}  // namespace

TEST_CASE("dispatched kernels agree with scalar reference") {
  std::mt19937_64 rng(7);
  const auto& ref = simd::scalar();
  const auto& act = simd::active();
  INFO("active backend: ", act.name);
  for (std::size_t n : {0ul, 1ul, 3ul, 4ul, 7ul, 64ul, 1001ul}) {
    auto a = randomVec(rng, n);
    auto b = randomVec(rng, n);
    CHECK(act.dot(a.data(), b.data(), n) ==
          doctest::Approx(ref.dot(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(act.sum(a.data(), n) == doctest::Approx(ref.sum(a.data(), n)).epsilon(1e-12));

    std::vector<double> y1 = b, y2 = b;
    act.axpy(1.7, a.data(), y1.data(), n);
    ref.axpy(1.7, a.data(), y2.data(), n);
    std::vector<double> o1(n), o2(n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));

    act.add(a.data(), b.data(), o1.data(), n);
    ref.add(a.data(), b.data(), o2.data(), n);
    CHECK(o1 == o2);
    act.sub(a.data(), b.data(), o1.data(), n);
    ref.sub(a.data(), b.data(), o2.data(), n);
    CHECK(o1 == o2);
    act.mul(a.data(), b.data(), o1.data(), n);
    ref.mul(a.data(), b.data(), o2.data(), n);
    CHECK(o1 == o2);
    act.scale(-0.3, a.data(), o1.data(), n);
    ref.scale(-0.3, a.data(), o2.data(), n);
    CHECK(o1 == o2);
  }
}

TEST_CASE("forceScalar switches the active backend") {
  simd::forceScalar(true);
  CHECK(std::string(simd::active().name) == "scalar");
  simd::forceScalar(false);
  // Whatever dispatch picks, it must be functional.
  double a[4] = {1, 2, 3, 4};
  CHECK(simd::sum(a, 4) == 10.0);
}
