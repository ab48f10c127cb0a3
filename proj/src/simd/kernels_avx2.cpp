// Built with -mavx2 -mfma. Only reached through the dispatcher after a
// runtime CPU check.

#include "multiscl/simd/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>

namespace multiscl::simd {
namespace {

constexpr std::size_t kLanes = 4;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + kLanes),
                           _mm256_loadu_pd(b + i + kLanes), acc1);
  }
  for (; i + kLanes <= n; i += kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename VecOp, typename ScalarOp>
inline void binary_avx2(const double* a, const double* b, double* out,
                        std::size_t n, VecOp vop, ScalarOp sop) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(out + i,
                     vop(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary_avx2(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); },
              [](double x, double y) { return x + y; });
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary_avx2(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); },
              [](double x, double y) { return x - y; });
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary_avx2(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); },
              [](double x, double y) { return x * y; });
}

void scale_avx2(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  }
  for (; i < n; ++i) out[i] = a[i] * s;
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(a[i * k + p], b + p * n, crow, n);
  }
}

void gemm_nt_acc_avx2(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] += dot_avx2(a + i * k, b + j * k, k);
    }
  }
}

void gemm_tn_acc_avx2(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      axpy_avx2(a[p * m + i], b + p * n, c + i * n, n);
    }
  }
}

}  // namespace

const KernelTable* avx2_kernels_compiled() {
  static const KernelTable table{
      Isa::Avx2,  dot_avx2,     axpy_avx2,        add_avx2,
      sub_avx2,   mul_avx2,     scale_avx2,       gemm_nn_avx2,
      gemm_nt_acc_avx2, gemm_tn_acc_avx2,
  };
  return &table;
}

}  // namespace multiscl::simd

#else

namespace multiscl::simd {
const KernelTable* avx2_kernels_compiled() { return nullptr; }
}  // namespace multiscl::simd

#endif
