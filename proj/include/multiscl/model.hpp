#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "multiscl/batcher.hpp"
#include "multiscl/corpus.hpp"
#include "multiscl/crossattn.hpp"
#include "multiscl/encoder.hpp"
#include "multiscl/losses.hpp"

namespace multiscl {

struct Model {
  EncoderParams encoder;
  CrossAttnParams cross;
  ClassifierParams classifier;

  std::size_t k() const { return encoder.k; }
  std::size_t pair_dim() const { return 4 * encoder.k; }
  // Stable order; names are unique.
  std::vector<NamedTensor> named_parameters() const;
};

Model init_model(std::size_t vocab_size, std::size_t k, std::size_t d, std::uint64_t seed,
                 std::size_t max_seq_len = kDefaultMaxSeqLen);

struct BatchOutputs {
  Tensor zs;         // 2K x 4k pair vectors
  Tensor premises;   // 2K x k sentence embeddings
  Tensor hypotheses; // 2K x k sentence embeddings
};

BatchOutputs forward_batch(const Model& model, const Vocab& vocab, const AugmentedBatch& batch);

LossBreakdown batch_loss(const Model& model, const Vocab& vocab, const AugmentedBatch& batch,
                         double tau, double alpha, double beta);

// Z for an unaugmented pair.
Tensor pair_vector(const Model& model, const Vocab& vocab, const SentencePair& pair);

// argmax of the classifier logits, ties to the lowest label id.
int predict(const Model& model, const Vocab& vocab, const SentencePair& pair);

}  // namespace multiscl
