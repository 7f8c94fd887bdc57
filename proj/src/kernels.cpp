#include "scr/kernels.hpp"

#include <cstdlib>
#include <string>

namespace scr::kernels {

namespace scalar {

double dot(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = y[i] + alpha * x[i];
  }
}

void adamw(float* w, const float* g, float* m, float* v, std::size_t n,
           const AdamwStep& s) {
  detail::adamw_loop<float>(w, g, m, v, n, s.lr, s.beta1, s.beta2, s.eps,
                            s.weight_decay, s.bias1, s.bias2);
}

}  // namespace scalar

const Ops& ops() {
  static const Ops selected = [] {
    Ops o{scalar::dot, scalar::axpy, scalar::adamw, "scalar"};
#if defined(__x86_64__) || defined(_M_X64)
    const char* env = std::getenv("SCR_KERNELS");
    const std::string want = env ? env : "";
    if (want != "scalar" && avx2::supported() && (want.empty() || want == "avx2")) {
      o = Ops{avx2::dot, avx2::axpy, avx2::adamw, "avx2"};
    }
#endif
    return o;
  }();
  return selected;
}

}  // namespace scr::kernels
