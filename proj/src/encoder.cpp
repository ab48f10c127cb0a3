#include "multiscl/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace multiscl {

namespace {

Tensor uniform_init(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

std::vector<NamedTensor> EncoderParams::named_parameters() const {
  return {
      {"encoder.embedding", embedding}, {"encoder.wq", wq},
      {"encoder.wk", wk},               {"encoder.wv", wv},
      {"encoder.wo", wo},               {"encoder.ffn_w1", ffn_w1},
      {"encoder.ffn_b1", ffn_b1},       {"encoder.ffn_w2", ffn_w2},
      {"encoder.ffn_b2", ffn_b2},       {"encoder.ln1_gamma", ln1_gamma},
      {"encoder.ln1_beta", ln1_beta},   {"encoder.ln2_gamma", ln2_gamma},
      {"encoder.ln2_beta", ln2_beta},
  };
}

Tensor sinusoidal_positions(std::size_t max_len, std::size_t k) {
  std::vector<double> v(max_len * k);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < k / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(k));
      v[pos * k + 2 * i] = std::sin(angle);
      v[pos * k + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({max_len, k}, std::move(v));
}

EncoderParams init_encoder(std::size_t vocab_size, std::size_t k, std::uint64_t seed,
                           std::size_t max_seq_len) {
  if (k < 4 || k % 2 != 0) {
    throw std::invalid_argument("encoder width k must be even and >= 4, got " + std::to_string(k));
  }
  if (vocab_size == 0) throw std::invalid_argument("encoder needs a non-empty vocabulary");
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(k));
  EncoderParams p;
  p.vocab_size = vocab_size;
  p.k = k;
  p.max_seq_len = max_seq_len;
  p.embedding = uniform_init({vocab_size, k}, bound, rng);
  p.wq = uniform_init({k, k}, bound, rng);
  p.wk = uniform_init({k, k}, bound, rng);
  p.wv = uniform_init({k, k}, bound, rng);
  p.wo = uniform_init({k, k}, bound, rng);
  p.ffn_w1 = uniform_init({k, 2 * k}, bound, rng);
  p.ffn_b1 = Tensor::zeros({2 * k}, true);
  p.ffn_w2 = uniform_init({2 * k, k}, bound, rng);
  p.ffn_b2 = Tensor::zeros({k}, true);
  p.ln1_gamma = Tensor::full({k}, 1.0, true);
  p.ln1_beta = Tensor::zeros({k}, true);
  p.ln2_gamma = Tensor::full({k}, 1.0, true);
  p.ln2_beta = Tensor::zeros({k}, true);
  p.positions = sinusoidal_positions(max_seq_len, k);
  return p;
}

Tensor encode(const EncoderParams& p, std::span<const std::size_t> ids, const DropoutMask* mask) {
  const std::size_t len = ids.size();
  if (len == 0) throw DimensionError("encode: empty token sequence");
  if (len > p.max_seq_len) {
    throw DimensionError("encode: sequence of " + std::to_string(len) + " tokens exceeds max_seq_len " +
                         std::to_string(p.max_seq_len));
  }
  const std::size_t k = p.k;
  std::vector<double> pos(p.positions.data().begin(),
                          p.positions.data().begin() + static_cast<std::ptrdiff_t>(len * k));
  Tensor e = add(gather_rows(p.embedding, ids), Tensor::from({len, k}, std::move(pos)));
  if (mask) {
    if (mask->rows != len || mask->cols != k) {
      throw DimensionError("encode: dropout mask " + shape_str({mask->rows, mask->cols}) +
                           " does not match embeddings " + shape_str({len, k}));
    }
    e = mul(e, Tensor::from({len, k}, mask->values));
  }

  Tensor q = matmul(e, p.wq);
  Tensor keys = matmul(e, p.wk);
  Tensor vals = matmul(e, p.wv);
  Tensor scores = scale(matmul(q, transpose(keys)), 1.0 / std::sqrt(static_cast<double>(k)));
  Tensor attn = matmul(matmul(softmax_rows(scores), vals), p.wo);
  Tensor h = layer_norm(add(e, attn), p.ln1_gamma, p.ln1_beta, kLayerNormEps);

  Tensor ff = add_row(matmul(relu(add_row(matmul(h, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);
  return layer_norm(add(h, ff), p.ln2_gamma, p.ln2_beta, kLayerNormEps);
}

Tensor sentence_embedding(const Tensor& states) { return pool(states, PoolKind::Mean); }

}  // namespace multiscl
