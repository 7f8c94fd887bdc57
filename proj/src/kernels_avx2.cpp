#include "scr/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace scr::kernels::avx2 {

bool supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

// Reduction accumulates in double (two 4-wide lanes), same widening as the
// scalar reference; only the summation order differs.
__attribute__((target("avx2,fma")))
double dot(const float* a, const float* b, std::size_t n) {
  __m256d acc_lo = _mm256_setzero_pd();
  __m256d acc_hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    const __m256d a_lo = _mm256_cvtps_pd(_mm256_castps256_ps128(va));
    const __m256d a_hi = _mm256_cvtps_pd(_mm256_extractf128_ps(va, 1));
    const __m256d b_lo = _mm256_cvtps_pd(_mm256_castps256_ps128(vb));
    const __m256d b_hi = _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1));
    acc_lo = _mm256_fmadd_pd(a_lo, b_lo, acc_lo);
    acc_hi = _mm256_fmadd_pd(a_hi, b_hi, acc_hi);
  }
  const __m256d acc = _mm256_add_pd(acc_lo, acc_hi);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double sum = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

// mul + add (no fma) so lanes round exactly like the scalar reference
__attribute__((target("avx2")))
void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(x + i);
    const __m256 vy = _mm256_loadu_ps(y + i);
    _mm256_storeu_ps(y + i, _mm256_add_ps(vy, _mm256_mul_ps(va, vx)));
  }
  for (; i < n; ++i) {
    y[i] = y[i] + alpha * x[i];
  }
}

__attribute__((target("avx2")))
void adamw(float* w, const float* g, float* m, float* v, std::size_t n,
           const AdamwStep& s) {
  const __m256 lr = _mm256_set1_ps(s.lr);
  const __m256 b1 = _mm256_set1_ps(s.beta1);
  const __m256 b2 = _mm256_set1_ps(s.beta2);
  const __m256 one_m_b1 = _mm256_set1_ps(1.0f - s.beta1);
  const __m256 one_m_b2 = _mm256_set1_ps(1.0f - s.beta2);
  const __m256 eps = _mm256_set1_ps(s.eps);
  const __m256 wd = _mm256_set1_ps(s.weight_decay);
  const __m256 bias1 = _mm256_set1_ps(s.bias1);
  const __m256 bias2 = _mm256_set1_ps(s.bias2);

  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gi = _mm256_loadu_ps(g + i);
    const __m256 gg = _mm256_mul_ps(gi, gi);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)),
                                    _mm256_mul_ps(one_m_b1, gi));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(one_m_b2, gg));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_div_ps(mi, bias1);
    const __m256 vhat = _mm256_div_ps(vi, bias2);
    const __m256 wi = _mm256_loadu_ps(w + i);
    const __m256 step =
        _mm256_add_ps(_mm256_div_ps(mhat, _mm256_add_ps(_mm256_sqrt_ps(vhat), eps)),
                      _mm256_mul_ps(wd, wi));
    _mm256_storeu_ps(w + i, _mm256_sub_ps(wi, _mm256_mul_ps(lr, step)));
  }
  if (i < n) {
    detail::adamw_loop<float>(w + i, g + i, m + i, v + i, n - i, s.lr, s.beta1,
                              s.beta2, s.eps, s.weight_decay, s.bias1, s.bias2);
  }
}

}  // namespace scr::kernels::avx2

#endif  // x86-64
