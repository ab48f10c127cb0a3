#include "multiscl/simd/kernels.hpp"

#include <algorithm>

namespace multiscl::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      axpy_scalar(a[i * k + p], b + p * n, crow, n);
    }
  }
}

void gemm_nt_acc_scalar(std::size_t m, std::size_t n, std::size_t k,
                        const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] += dot_scalar(a + i * k, b + j * k, k);
    }
  }
}

void gemm_tn_acc_scalar(std::size_t m, std::size_t n, std::size_t k,
                        const double* a, const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      axpy_scalar(a[p * m + i], b + p * n, c + i * n, n);
    }
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      Isa::Scalar,    dot_scalar,     axpy_scalar,        add_scalar,
      sub_scalar,     mul_scalar,     scale_scalar,       gemm_nn_scalar,
      gemm_nt_acc_scalar, gemm_tn_acc_scalar,
  };
  return table;
}

}  // namespace multiscl::simd
