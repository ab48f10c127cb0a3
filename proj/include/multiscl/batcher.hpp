#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "multiscl/augment.hpp"

namespace multiscl {

struct BatchError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// 2K views; views 2i and 2i+1 come from the i-th kept sample.
struct AugmentedBatch {
  std::vector<AugmentedView> views;
  std::vector<int> labels;
  std::vector<std::size_t> same_origin;
  // Hypothesis-view indices that are positives (entailment) or negatives
  // (contradiction) for the premise of view i.
  std::vector<std::vector<std::size_t>> entail_pos;
  std::vector<std::vector<std::size_t>> contra_neg;
  // Index into the input samples for each kept sample.
  std::vector<std::size_t> sample_index;

  std::size_t size() const { return views.size(); }
  static std::size_t origin(std::size_t view) { return view / 2; }
};

// Index sets derived from labels alone, for 2K views laid out in sibling pairs.
void fill_index_sets(AugmentedBatch& batch);

// View 2i uses strategies.first, view 2i+1 strategies.second. Views longer
// than max_seq_len are truncated. A sample whose augmentation throws
// AugmentError is dropped with a warning; fewer than two kept samples is an
// error.
AugmentedBatch build_batch(std::span<const SentencePair> samples,
                           const std::pair<Strategy, Strategy>& strategies,
                           const AugmentContext& ctx, std::uint64_t seed,
                           std::size_t max_seq_len = kDefaultMaxSeqLen);

}  // namespace multiscl
