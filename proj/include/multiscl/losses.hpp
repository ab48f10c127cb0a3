#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "multiscl/batcher.hpp"
#include "multiscl/tensor.hpp"

namespace multiscl {

inline constexpr double kDefaultTau = 0.08;
inline constexpr double kDefaultAlpha = 1.0;
inline constexpr double kDefaultBeta = 1.0;

struct ClassifierParams {
  Tensor w;  // 3 x 4k
  Tensor b;  // 3

  std::vector<NamedTensor> named_parameters() const;
};

ClassifierParams init_classifier(std::size_t pair_dim, std::uint64_t seed);
Tensor classifier_logits(const ClassifierParams& params, const Tensor& zs);

using IndexSets = std::vector<std::vector<std::size_t>>;

// For each anchor row i of sim with non-empty pos[i]:
//   -log( mean_{p in pos[i]} e^{sim[i][p]/tau} / sum_{d in denom[i]} e^{sim[i][d]/tau} )
// averaged over those anchors; 0 when no anchor has positives.
Tensor masked_contrastive(const Tensor& sim, const IndexSets& pos, const IndexSets& denom, double tau);

// Row-wise cosine similarity matrix between the rows of a and b.
Tensor cosine_matrix(const Tensor& a, const Tensor& b);

// Anchors are the 2K premise views. Candidates are indexed 0..2K-1 for premise
// views and 2K..4K-1 for hypothesis views. Positives of anchor i: its sibling
// premise view, plus both hypothesis views of its sample when entailment.
// Denominator of anchor i: every premise view other than i, plus every
// hypothesis view that is a positive or negative of some anchor.
Tensor sentence_scl(const Tensor& prem_embs, const Tensor& hyp_embs, const AugmentedBatch& batch,
                    double tau);

// The index sets used by sentence_scl, exposed for testing.
IndexSets sentence_positives(const AugmentedBatch& batch);
IndexSets sentence_denominators(const AugmentedBatch& batch);

// SupCon over pair vectors: positives are other views with the same label,
// the denominator is every other view.
Tensor pair_scl(const Tensor& zs, std::span<const int> labels, double tau);

Tensor classification_loss(const ClassifierParams& params, const Tensor& zs, std::span<const int> labels);

struct LossBreakdown {
  Tensor ce;
  Tensor scl_sent;
  Tensor scl_pair;
  Tensor total;
  double tau = kDefaultTau;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
};

// total = ce + alpha * scl_sent + beta * scl_pair
LossBreakdown total_loss(const Tensor& ce, const Tensor& scl_sent, const Tensor& scl_pair,
                         double alpha = kDefaultAlpha, double beta = kDefaultBeta,
                         double tau = kDefaultTau);

}  // namespace multiscl
