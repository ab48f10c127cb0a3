#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "multiscl/simd/kernels.hpp"

using namespace multiscl::simd;

namespace {

std::vector<double> rand_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<const KernelTable*> vector_tables() {
  std::vector<const KernelTable*> out;
  if (avx2_kernels()) out.push_back(avx2_kernels());
  if (neon_kernels()) out.push_back(neon_kernels());
  return out;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(b[i])));
  }
}

}  // namespace

TEST_CASE("scalar table is always available and named") {
  CHECK(isa_available(Isa::Scalar));
  CHECK(kernels_for(Isa::Scalar).isa == Isa::Scalar);
  CHECK(isa_name(Isa::Avx2) == "avx2");
}

TEST_CASE("force_isa switches the active table") {
  const Isa before = active_isa();
  force_isa(Isa::Scalar);
  CHECK(active_isa() == Isa::Scalar);
  force_isa(before);
  CHECK(active_isa() == before);
}

TEST_CASE("vector kernels agree with the scalar reference") {
  const auto& ref = scalar_kernels();
  std::mt19937_64 rng(7);
  for (const KernelTable* t : vector_tables()) {
    CAPTURE(isa_name(t->isa));
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 9u, 17u, 64u, 129u}) {
      CAPTURE(n);
      auto a = rand_vec(n, rng), b = rand_vec(n, rng);
      CHECK(std::abs(t->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <=
            1e-12 * std::max<double>(1.0, static_cast<double>(n)));

      std::vector<double> o1(n), o2(n);
      // add/sub/mul/scale have no reassociation: bit-exact.
      t->add(a.data(), b.data(), o1.data(), n);
      ref.add(a.data(), b.data(), o2.data(), n);
      CHECK(o1 == o2);
      t->sub(a.data(), b.data(), o1.data(), n);
      ref.sub(a.data(), b.data(), o2.data(), n);
      CHECK(o1 == o2);
      t->mul(a.data(), b.data(), o1.data(), n);
      ref.mul(a.data(), b.data(), o2.data(), n);
      CHECK(o1 == o2);
      t->scale(a.data(), -0.37, o1.data(), n);
      ref.scale(a.data(), -0.37, o2.data(), n);
      CHECK(o1 == o2);

      auto y1 = b, y2 = b;
      t->axpy(1.25, a.data(), y1.data(), n);
      ref.axpy(1.25, a.data(), y2.data(), n);
      check_close(y1, y2, 1e-14);
    }
  }
}

TEST_CASE("gemm variants agree with the scalar reference") {
  const auto& ref = scalar_kernels();
  std::mt19937_64 rng(11);
  for (const KernelTable* t : vector_tables()) {
    CAPTURE(isa_name(t->isa));
    struct Dims { std::size_t m, n, k; };
    for (auto [m, n, k] : {Dims{1, 1, 1}, Dims{3, 5, 7}, Dims{8, 4, 16}, Dims{13, 9, 6}}) {
      auto a = rand_vec(m * k, rng), b = rand_vec(k * n, rng);
      std::vector<double> c1(m * n), c2(m * n);
      t->gemm_nn(m, n, k, a.data(), b.data(), c1.data());
      ref.gemm_nn(m, n, k, a.data(), b.data(), c2.data());
      check_close(c1, c2, 1e-12);

      auto bt = rand_vec(n * k, rng);
      auto d1 = rand_vec(m * n, rng);
      auto d2 = d1;
      t->gemm_nt_acc(m, n, k, a.data(), bt.data(), d1.data());
      ref.gemm_nt_acc(m, n, k, a.data(), bt.data(), d2.data());
      check_close(d1, d2, 1e-12);

      auto at = rand_vec(k * m, rng);
      auto e1 = rand_vec(m * n, rng);
      auto e2 = e1;
      t->gemm_tn_acc(m, n, k, at.data(), b.data(), e1.data());
      ref.gemm_tn_acc(m, n, k, at.data(), b.data(), e2.data());
      check_close(e1, e2, 1e-12);
    }
  }
}

TEST_CASE("scalar gemm matches a naive triple loop") {
  std::mt19937_64 rng(3);
  const std::size_t m = 4, n = 3, k = 5;
  auto a = rand_vec(m * k, rng), b = rand_vec(k * n, rng);
  std::vector<double> c(m * n);
  scalar_kernels().gemm_nn(m, n, k, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("kernels are deterministic across calls") {
  std::mt19937_64 rng(5);
  auto a = rand_vec(101, rng), b = rand_vec(101, rng);
  const auto& k = active();
  CHECK(k.dot(a.data(), b.data(), 101) == k.dot(a.data(), b.data(), 101));
}
