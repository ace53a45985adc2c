#include "spcc/simd/kernels.hpp"

#include <atomic>

#if defined(__x86_64__) || defined(_M_X64)
#define SPCC_HAVE_X86 1
#include <immintrin.h>
#endif

namespace spcc::simd {
namespace {

// ---- scalar reference ----

double dotScalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpyScalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void addScalar(const double* a, const double* b, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

void subScalar(const double* a, const double* b, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

void mulScalar(const double* a, const double* b, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

void scaleScalar(double alpha, const double* a, double* o, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) o[i] = alpha * a[i];
}

double sumScalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

constexpr Kernels kScalar = {dotScalar, axpyScalar, addScalar, subScalar,
                             mulScalar, scaleScalar, sumScalar, "scalar"};

#if SPCC_HAVE_X86

// ---- AVX2 + FMA ----

__attribute__((target("avx2,fma"))) double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

__attribute__((target("avx2,fma"))) double dotAvx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

__attribute__((target("avx2,fma"))) void axpyAvx2(double alpha, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

__attribute__((target("avx2"))) void addAvx2(const double* a, const double* b, double* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] + b[i];
}

__attribute__((target("avx2"))) void subAvx2(const double* a, const double* b, double* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] - b[i];
}

__attribute__((target("avx2"))) void mulAvx2(const double* a, const double* b, double* o, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] * b[i];
}

__attribute__((target("avx2"))) void scaleAvx2(double alpha, const double* a, double* o, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_mul_pd(va, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) o[i] = alpha * a[i];
}

__attribute__((target("avx2"))) double sumAvx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

constexpr Kernels kAvx2 = {dotAvx2, axpyAvx2, addAvx2, subAvx2,
                           mulAvx2, scaleAvx2, sumAvx2, "avx2"};

#endif  // SPCC_HAVE_X86

const Kernels* detect() {
#if SPCC_HAVE_X86
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &kAvx2;
#endif
  return &kScalar;
}

std::atomic<const Kernels*> gActive{nullptr};

}  // namespace

const Kernels& scalar() { return kScalar; }

const Kernels& active() {
  const Kernels* k = gActive.load(std::memory_order_acquire);
  if (!k) {
    k = detect();
    gActive.store(k, std::memory_order_release);
  }
  return *k;
}

void forceScalar(bool on) {
  gActive.store(on ? &kScalar : detect(), std::memory_order_release);
}

}  // namespace spcc::simd
