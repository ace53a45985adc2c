#pragma once

#include <cstddef>

// Data-parallel inner-loop kernels. Scalar reference implementations are the
// source of truth; an AVX2 variant is selected once at startup when the CPU
// supports it. Backends may differ in the last few ulps (FMA, reassociation),
// never beyond; the equivalence tests pin that bound.
namespace spcc::simd {

struct Kernels {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(double alpha, const double* a, double* out, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  const char* name;
};

// Active (dispatched) kernel table.
const Kernels& active();
// Scalar reference table, always available.
const Kernels& scalar();
// Force the scalar backend (tests); pass false to restore dispatch.
void forceScalar(bool on);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void add(const double* a, const double* b, double* o, std::size_t n) { active().add(a, b, o, n); }
inline void sub(const double* a, const double* b, double* o, std::size_t n) { active().sub(a, b, o, n); }
inline void mul(const double* a, const double* b, double* o, std::size_t n) { active().mul(a, b, o, n); }
inline void scale(double s, const double* a, double* o, std::size_t n) { active().scale(s, a, o, n); }
inline double sum(const double* a, std::size_t n) { return active().sum(a, n); }

}  // namespace spcc::simd
