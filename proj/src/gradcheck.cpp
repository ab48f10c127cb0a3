#include "multiscl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "multiscl/batcher.hpp"
#include "multiscl/model.hpp"

namespace multiscl {

bool GradcheckReport::passed() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const BlockReport& b) { return b.passed; });
}

std::optional<std::string> GradcheckReport::offender() const {
  for (const auto& b : blocks) {
    if (!b.passed) return b.name;
  }
  return std::nullopt;
}

std::optional<OpKind> parse_op(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(OpKind::Custom); ++i) {
    const auto op = static_cast<OpKind>(i);
    if (name == op_name(op)) return op;
  }
  return std::nullopt;
}

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  // One entailment and one contradiction sample so that every loss term and
  // every index set is exercised.
  std::vector<SentencePair> samples{
      {tokenize("a big dog finds the ball"), tokenize("a big animal finds the ball"), Label::Entailment},
      {tokenize("the cat likes a hot lamp"), tokenize("the cat likes a cold lamp"), Label::Contradiction}};
  const Vocab vocab = build_vocab(samples, 1);
  const Model model = init_model(vocab.size(), o.k, o.d, o.seed);
  AugmentContext ctx;
  ctx.embed_dim = o.k;
  const std::pair<Strategy, Strategy> strategies{{StrategyKind::Reordering, kDefaultEta},
                                                 {StrategyKind::Dropout, kDefaultEta}};
  const AugmentedBatch batch = build_batch(samples, strategies, ctx, o.seed);
  auto loss = [&] { return batch_loss(model, vocab, batch, kDefaultTau, kDefaultAlpha, kDefaultBeta).total; };

  const auto params = model.named_parameters();
  for (const auto& p : params) p.tensor.clear_grad();
  backward(loss());

  GradcheckReport report;
  report.tolerance = o.tolerance;
  NoGradGuard ng;
  for (const auto& p : params) {
    BlockReport b{p.name, p.tensor.size(), 0.0, false};
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w[i];
      w[i] = keep + o.step;
      const double up = loss().item();
      w[i] = keep - o.step;
      const double down = loss().item();
      w[i] = keep;
      const double numeric = (up - down) / (2.0 * o.step);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), o.floor});
      b.max_rel_err = std::max(b.max_rel_err, std::abs(a - numeric) / denom);
    }
    b.passed = b.max_rel_err < o.tolerance;
    report.blocks.push_back(std::move(b));
  }
  for (const auto& p : params) p.tensor.clear_grad();
  return report;
}

}  // namespace multiscl
