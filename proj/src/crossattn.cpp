#include "multiscl/crossattn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "multiscl/encoder.hpp"

namespace multiscl {

namespace {

Tensor uniform_init(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

void check_states(const Tensor& s, std::size_t k, const char* what) {
  if (s.dim() != 2 || s.cols() != k || s.rows() == 0) {
    throw DimensionError(std::string(what) + " states must be [len x " + std::to_string(k) +
                         "], got " + shape_str(s.shape()));
  }
}

}  // namespace

std::vector<NamedTensor> CrossAttnParams::named_parameters() const {
  return {
      {"crossattn.w", w},   {"crossattn.p", p},
      {"crossattn.f", f},   {"crossattn.b", b},
      {"crossattn.ln_gamma", ln_gamma}, {"crossattn.ln_beta", ln_beta},
  };
}

CrossAttnParams init_crossattn(std::size_t k, std::size_t d, std::uint64_t seed) {
  if (k == 0 || d == 0) throw std::invalid_argument("crossattn: k and d must be positive");
  std::mt19937_64 rng(seed);
  CrossAttnParams c;
  c.k = k;
  c.d = d;
  c.w = uniform_init({d, k}, 1.0 / std::sqrt(static_cast<double>(k)), rng);
  c.p = uniform_init({d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  c.f = uniform_init({k, 4 * k}, 1.0 / std::sqrt(static_cast<double>(4 * k)), rng);
  c.b = Tensor::zeros({k}, true);
  c.ln_gamma = Tensor::full({k}, 1.0, true);
  c.ln_beta = Tensor::zeros({k}, true);
  return c;
}

Tensor coattention(const CrossAttnParams& params, const Tensor& sp, const Tensor& sh) {
  check_states(sp, params.k, "premise");
  check_states(sh, params.k, "hypothesis");
  const std::size_t m = sp.rows(), n = sh.rows();
  Tensor t = tanh(matmul(pairwise_mul(sp, sh), transpose(params.w)));
  Tensor c = matmul(t, reshape(params.p, {params.d, 1}));
  return reshape(c, {m, n});
}

Attended attend(const Tensor& coatt, const Tensor& sp, const Tensor& sh) {
  if (coatt.dim() != 2 || coatt.rows() != sp.rows() || coatt.cols() != sh.rows()) {
    throw DimensionError("attend: co-attention " + shape_str(coatt.shape()) +
                         " does not match sentence lengths " + std::to_string(sp.rows()) + " and " +
                         std::to_string(sh.rows()));
  }
  return {matmul(softmax_rows(coatt), sh), matmul(softmax_rows(transpose(coatt)), sp)};
}

Tensor enhance(const CrossAttnParams& params, const Tensor& s, const Tensor& s_att) {
  Tensor u = concat_cols({s, s_att, sub(s, s_att), mul(s, s_att)});
  Tensor v = relu(add_row(matmul(u, transpose(params.f)), params.b));
  return layer_norm(v, params.ln_gamma, params.ln_beta, kLayerNormEps);
}

Tensor join(const Tensor& enhanced_p, const Tensor& enhanced_h) {
  return concat({pool(enhanced_p, PoolKind::Mean), pool(enhanced_p, PoolKind::Max),
                 pool(enhanced_h, PoolKind::Mean), pool(enhanced_h, PoolKind::Max)});
}

Tensor pair_forward(const CrossAttnParams& params, const Tensor& sp, const Tensor& sh) {
  Attended a = attend(coattention(params, sp, sh), sp, sh);
  return join(enhance(params, sp, a.premise), enhance(params, sh, a.hypothesis));
}

}  // namespace multiscl
