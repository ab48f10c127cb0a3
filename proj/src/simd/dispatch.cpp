#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "multiscl/simd/kernels.hpp"

namespace multiscl::simd {

const KernelTable* avx2_kernels_compiled();
const KernelTable* neon_kernels_compiled();

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("MULTISCL_ISA")) {
    std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2_kernels()) return avx2_kernels();
    if (want == "neon" && neon_kernels()) return neon_kernels();
  }
  if (const auto* t = avx2_kernels()) return t;
  if (const auto* t = neon_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{pick_default()};
  return current;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable* t = cpu_has_avx2_fma() ? avx2_kernels_compiled() : nullptr;
  return t;
}

// Every aarch64 core has Advanced SIMD, so compiled-in means usable.
const KernelTable* neon_kernels() { return neon_kernels_compiled(); }

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2: return avx2_kernels() != nullptr;
    case Isa::Neon: return neon_kernels() != nullptr;
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return scalar_kernels();
    case Isa::Avx2:
      if (avx2_kernels()) return *avx2_kernels();
      break;
    case Isa::Neon:
      if (neon_kernels()) return *neon_kernels();
      break;
  }
  throw std::runtime_error("ISA not available on this machine: " + std::string(isa_name(isa)));
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

Isa active_isa() { return active().isa; }

void force_isa(Isa isa) { slot().store(&kernels_for(isa), std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

}  // namespace multiscl::simd
