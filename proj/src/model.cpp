#include "multiscl/model.hpp"

#include "multiscl/augment.hpp"

namespace multiscl {

std::vector<NamedTensor> Model::named_parameters() const {
  auto out = encoder.named_parameters();
  for (auto& p : cross.named_parameters()) out.push_back(std::move(p));
  for (auto& p : classifier.named_parameters()) out.push_back(std::move(p));
  return out;
}

Model init_model(std::size_t vocab_size, std::size_t k, std::size_t d, std::uint64_t seed,
                 std::size_t max_seq_len) {
  Model m;
  m.encoder = init_encoder(vocab_size, k, derive_seed(seed, 101), max_seq_len);
  m.cross = init_crossattn(k, d, derive_seed(seed, 102));
  m.classifier = init_classifier(4 * k, derive_seed(seed, 103));
  return m;
}

namespace {

struct ViewOutputs {
  Tensor z, premise, hypothesis;
};

ViewOutputs forward_view(const Model& m, const Vocab& vocab, const SentencePair& pair,
                         const DropoutMask* pmask, const DropoutMask* hmask) {
  const auto pids = vocab.encode(pair.premise);
  const auto hids = vocab.encode(pair.hypothesis);
  Tensor sp = encode(m.encoder, pids, pmask);
  Tensor sh = encode(m.encoder, hids, hmask);
  return {pair_forward(m.cross, sp, sh), sentence_embedding(sp), sentence_embedding(sh)};
}

}  // namespace

BatchOutputs forward_batch(const Model& model, const Vocab& vocab, const AugmentedBatch& batch) {
  std::vector<Tensor> zs, ps, hs;
  for (const auto& v : batch.views) {
    auto out = forward_view(model, vocab, v.pair, v.premise_mask ? &*v.premise_mask : nullptr,
                            v.hypothesis_mask ? &*v.hypothesis_mask : nullptr);
    zs.push_back(out.z);
    ps.push_back(out.premise);
    hs.push_back(out.hypothesis);
  }
  return {stack_rows(zs), stack_rows(ps), stack_rows(hs)};
}

LossBreakdown batch_loss(const Model& model, const Vocab& vocab, const AugmentedBatch& batch,
                         double tau, double alpha, double beta) {
  auto out = forward_batch(model, vocab, batch);
  Tensor ce = classification_loss(model.classifier, out.zs, batch.labels);
  Tensor sent = sentence_scl(out.premises, out.hypotheses, batch, tau);
  Tensor pair = pair_scl(out.zs, batch.labels, tau);
  return total_loss(ce, sent, pair, alpha, beta, tau);
}

Tensor pair_vector(const Model& model, const Vocab& vocab, const SentencePair& pair) {
  return forward_view(model, vocab, pair, nullptr, nullptr).z;
}

int predict(const Model& model, const Vocab& vocab, const SentencePair& pair) {
  NoGradGuard ng;
  Tensor z = pair_vector(model, vocab, pair);
  Tensor logits = classifier_logits(model.classifier, reshape(z, {1, z.size()}));
  int best = 0;
  for (int c = 1; c < static_cast<int>(kNumLabels); ++c) {
    if (logits.at(static_cast<std::size_t>(c)) > logits.at(static_cast<std::size_t>(best))) best = c;
  }
  return best;
}

}  // namespace multiscl
