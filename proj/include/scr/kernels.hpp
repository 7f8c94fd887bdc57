#pragma once

#include <cmath>
#include <cstddef>

// Data-parallel inner loops of the classifier and optimizer. Scalar kernels
// are the reference; the AVX2 variants are picked at runtime when the CPU
// supports them and must agree with the reference: bit-exactly for the
// elementwise kernels, to reduction-order rounding for dot.

namespace scr::kernels {

struct AdamwStep {
  float lr;
  float beta1;
  float beta2;
  float eps;
  float weight_decay;
  float bias1;  // 1 - beta1^t
  float bias2;  // 1 - beta2^t
};

namespace detail {

// Single source of the update formula; the AVX2 kernel mirrors this exact
// operation order so float results match the scalar reference bitwise.
template <class T>
inline void adamw_loop(T* w, const T* g, T* m, T* v, std::size_t n, T lr, T b1,
                       T b2, T eps, T wd, T bias1, T bias2) {
  for (std::size_t i = 0; i < n; ++i) {
    const T gi = g[i];
    const T gg = gi * gi;
    m[i] = b1 * m[i] + (T(1) - b1) * gi;
    v[i] = b2 * v[i] + (T(1) - b2) * gg;
    const T mhat = m[i] / bias1;
    const T vhat = v[i] / bias2;
    const T step = mhat / (std::sqrt(vhat) + eps) + wd * w[i];
    w[i] = w[i] - lr * step;
  }
}

}  // namespace detail

namespace scalar {
double dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void adamw(float* w, const float* g, float* m, float* v, std::size_t n,
           const AdamwStep& s);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
bool supported();
double dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void adamw(float* w, const float* g, float* m, float* v, std::size_t n,
           const AdamwStep& s);
}  // namespace avx2
#endif

struct Ops {
  double (*dot)(const float*, const float*, std::size_t);
  void (*axpy)(float, const float*, float*, std::size_t);
  void (*adamw)(float*, const float*, float*, float*, std::size_t,
                const AdamwStep&);
  const char* name;
};

// Active kernel set, picked once per process. Env var SCR_KERNELS=scalar|avx2
// overrides; an unsupported request falls back to scalar.
const Ops& ops();

// float paths go through the dispatch table
inline double dot(const float* a, const float* b, std::size_t n) {
  return ops().dot(a, b, n);
}
inline void axpy(float alpha, const float* x, float* y, std::size_t n) {
  ops().axpy(alpha, x, y, n);
}

// double paths (used by the widened-precision test instantiations) stay scalar
inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace scr::kernels
