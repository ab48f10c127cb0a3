#pragma once

#include <cstdint>
#include <vector>

#include "multiscl/tensor.hpp"

namespace multiscl {

// Parameters of the premise/hypothesis interaction block.
struct CrossAttnParams {
  std::size_t k = 0;
  std::size_t d = 0;

  Tensor w;  // d x k
  Tensor p;  // d
  Tensor f;  // k x 4k
  Tensor b;  // k
  Tensor ln_gamma, ln_beta;  // k

  std::vector<NamedTensor> named_parameters() const;
};

CrossAttnParams init_crossattn(std::size_t k, std::size_t d, std::uint64_t seed);

// C[i][j] = p . tanh(W (sp_i ⊙ sh_j)); shape m x n.
Tensor coattention(const CrossAttnParams& params, const Tensor& sp, const Tensor& sh);

struct Attended {
  Tensor premise;     // m x k, rows are convex combinations of hypothesis rows
  Tensor hypothesis;  // n x k, rows are convex combinations of premise rows
};

Attended attend(const Tensor& coatt, const Tensor& sp, const Tensor& sh);

// LayerNorm(ReLU(F [s; s'; s - s'; s ⊙ s'] + b)) row-wise.
Tensor enhance(const CrossAttnParams& params, const Tensor& s, const Tensor& s_att);

// [mean(p); max(p); mean(h); max(h)], length 4k.
Tensor join(const Tensor& enhanced_p, const Tensor& enhanced_h);

// Full interaction: token states of both sentences to the pair vector Z.
Tensor pair_forward(const CrossAttnParams& params, const Tensor& sp, const Tensor& sh);

}  // namespace multiscl
