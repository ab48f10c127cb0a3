#include "multiscl/batcher.hpp"

#include <string>

#include "multiscl/log.hpp"

namespace multiscl {

namespace {

void truncate(Tokens& tokens, std::optional<DropoutMask>& mask, std::size_t max_len) {
  if (tokens.size() <= max_len) return;
  tokens.resize(max_len);
  if (mask && mask->rows > max_len) {
    mask->rows = max_len;
    mask->values.resize(max_len * mask->cols);
  }
}

}  // namespace

void fill_index_sets(AugmentedBatch& b) {
  const std::size_t n = b.labels.size();
  b.same_origin.assign(n, 0);
  b.entail_pos.assign(n, {});
  b.contra_neg.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    b.same_origin[i] = i ^ 1u;
    const std::size_t first = 2 * AugmentedBatch::origin(i);
    const auto label = static_cast<Label>(b.labels[i]);
    if (label == Label::Entailment) b.entail_pos[i] = {first, first + 1};
    if (label == Label::Contradiction) b.contra_neg[i] = {first, first + 1};
  }
}

AugmentedBatch build_batch(std::span<const SentencePair> samples,
                           const std::pair<Strategy, Strategy>& strategies,
                           const AugmentContext& ctx, std::uint64_t seed,
                           std::size_t max_seq_len) {
  if (samples.size() < 2) {
    throw BatchError("contrastive batch needs at least 2 samples, got " + std::to_string(samples.size()));
  }
  AugmentedBatch b;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      auto a = augment_pair(samples[i], strategies.first, ctx, derive_seed(seed, 2 * i));
      auto c = augment_pair(samples[i], strategies.second, ctx, derive_seed(seed, 2 * i + 1));
      for (auto* v : {&a, &c}) {
        truncate(v->pair.premise, v->premise_mask, max_seq_len);
        truncate(v->pair.hypothesis, v->hypothesis_mask, max_seq_len);
        b.labels.push_back(static_cast<int>(v->pair.label));
      }
      b.views.push_back(std::move(a));
      b.views.push_back(std::move(c));
      b.sample_index.push_back(i);
    } catch (const AugmentError& e) {
      logging::warn("dropping sample " + std::to_string(i) + " from batch: " + e.what());
    }
  }
  if (b.sample_index.size() < 2) {
    throw BatchError("only " + std::to_string(b.sample_index.size()) +
                     " samples survived augmentation; contrastive batch needs 2");
  }
  fill_index_sets(b);
  return b;
}

}  // namespace multiscl
