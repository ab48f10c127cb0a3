#pragma once

#include <cstddef>
#include <string_view>

// Dense float64 inner loops used by the tensor core. Every kernel has a
// portable scalar reference; vectorized variants are selected once at
// startup from what the CPU supports and are equivalence-tested against it.
//
// All matrices are row-major and contiguous.

namespace multiscl::simd {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] * s
  void (*scale)(const double* a, double s, double* out, std::size_t n);

  // C[m x n] = A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt_acc)(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, const double* b, double* c);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn_acc)(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, const double* b, double* c);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

bool isa_available(Isa isa);
const KernelTable& kernels_for(Isa isa);

// The table every tensor op dispatches through. Chosen on first use: the
// widest available ISA, unless MULTISCL_ISA=scalar|avx2|neon says otherwise.
const KernelTable& active();
Isa active_isa();

// Pin the dispatch target. Intended for tests and benchmarks; not thread-safe
// with respect to concurrently running ops.
void force_isa(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace multiscl::simd
