#include "multiscl/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <algorithm>

namespace multiscl::simd {
namespace {

constexpr std::size_t kLanes = 2;

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + kLanes), vld1q_f64(b + i + kLanes));
  }
  for (; i + kLanes <= n; i += kLanes) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_neon(const double* a, double s, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) vst1q_f64(out + i, vmulq_n_f64(vld1q_f64(a + i), s));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void gemm_nn_neon(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy_neon(a[i * k + p], b + p * n, c + i * n, n);
  }
}

void gemm_nt_acc_neon(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_neon(a + i * k, b + j * k, k);
  }
}

void gemm_tn_acc_neon(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) axpy_neon(a[p * m + i], b + p * n, c + i * n, n);
  }
}

}  // namespace

const KernelTable* neon_kernels_compiled() {
  static const KernelTable table{
      Isa::Neon,  dot_neon,     axpy_neon,        add_neon,
      sub_neon,   mul_neon,     scale_neon,       gemm_nn_neon,
      gemm_nt_acc_neon, gemm_tn_acc_neon,
  };
  return &table;
}

}  // namespace multiscl::simd

#else

namespace multiscl::simd {
const KernelTable* neon_kernels_compiled() { return nullptr; }
}  // namespace multiscl::simd

#endif
