#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "multiscl/augment.hpp"
#include "multiscl/tensor.hpp"

namespace multiscl {

// Single-block, single-head post-LN transformer encoder with sinusoidal
// positions.
struct EncoderParams {
  std::size_t vocab_size = 0;
  std::size_t k = 0;
  std::size_t max_seq_len = 0;

  Tensor embedding;  // vocab_size x k
  Tensor wq, wk, wv, wo;  // k x k
  Tensor ffn_w1;  // k x 2k
  Tensor ffn_b1;  // 2k
  Tensor ffn_w2;  // 2k x k
  Tensor ffn_b2;  // k
  Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;  // k
  Tensor positions;  // max_seq_len x k, constant

  std::vector<NamedTensor> named_parameters() const;
};

inline constexpr double kLayerNormEps = 1e-5;

// Embeddings and projections ~ U(-1/sqrt(k), 1/sqrt(k)); biases 0; gamma 1,
// beta 0. Throws std::invalid_argument for odd k or k < 4.
EncoderParams init_encoder(std::size_t vocab_size, std::size_t k, std::uint64_t seed,
                           std::size_t max_seq_len = kDefaultMaxSeqLen);

Tensor sinusoidal_positions(std::size_t max_len, std::size_t k);

// states = LN2(H + FFN(H)), H = LN1(E + SelfAttn(E)), E = (embed + pos) ⊙ mask.
Tensor encode(const EncoderParams& p, std::span<const std::size_t> ids,
              const DropoutMask* mask = nullptr);

// Mean over token states.
Tensor sentence_embedding(const Tensor& states);

}  // namespace multiscl
