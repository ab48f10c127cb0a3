#include "multiscl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

namespace multiscl {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("temperature must be positive and finite, got " + std::to_string(tau));
  }
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

std::vector<NamedTensor> ClassifierParams::named_parameters() const {
  return {{"classifier.w", w}, {"classifier.b", b}};
}

ClassifierParams init_classifier(std::size_t pair_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(pair_dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> w(kNumLabels * pair_dim);
  for (auto& x : w) x = u(rng);
  return {Tensor::from({kNumLabels, pair_dim}, std::move(w), true), Tensor::zeros({kNumLabels}, true)};
}

Tensor classifier_logits(const ClassifierParams& params, const Tensor& zs) {
  return add_row(matmul(zs, transpose(params.w)), params.b);
}

Tensor masked_contrastive(const Tensor& sim, const IndexSets& pos, const IndexSets& denom, double tau) {
  check_tau(tau);
  if (sim.dim() != 2 || pos.size() != sim.rows() || denom.size() != sim.rows()) {
    throw DimensionError("masked_contrastive: " + shape_str(sim.shape()) + " with " +
                         std::to_string(pos.size()) + " positive sets");
  }
  const std::size_t rows = sim.rows(), cols = sim.cols();
  auto s = sim.data();
  // Per anchor: softmax weights over the denominator minus those over the
  // positives, which is tau times the gradient of that anchor's term.
  std::vector<double> coef(rows * cols, 0.0);
  double total = 0.0;
  std::size_t anchors = 0;
  std::vector<double> buf;
  for (std::size_t i = 0; i < rows; ++i) {
    if (pos[i].empty()) continue;
    if (denom[i].empty()) throw DimensionError("masked_contrastive: anchor " + std::to_string(i) + " has an empty denominator");
    for (const auto* set : {&pos[i], &denom[i]}) {
      for (std::size_t j : *set) {
        if (j >= cols) throw DimensionError("masked_contrastive: index " + std::to_string(j) + " out of range");
      }
    }
    buf.clear();
    for (std::size_t j : denom[i]) buf.push_back(s[i * cols + j] / tau);
    const double lse_d = log_sum_exp(buf);
    for (std::size_t j : denom[i]) coef[i * cols + j] += std::exp(s[i * cols + j] / tau - lse_d);
    buf.clear();
    for (std::size_t j : pos[i]) buf.push_back(s[i * cols + j] / tau);
    const double lse_p = log_sum_exp(buf);
    for (std::size_t j : pos[i]) coef[i * cols + j] -= std::exp(s[i * cols + j] / tau - lse_p);
    total += lse_d - lse_p + std::log(static_cast<double>(pos[i].size()));
    ++anchors;
  }
  const double value = anchors ? total / static_cast<double>(anchors) : 0.0;
  const double g_scale = anchors ? 1.0 / (tau * static_cast<double>(anchors)) : 0.0;
  return make_op_result(OpKind::Custom, {}, {value}, {sim},
                        [sim, coef = std::move(coef), g_scale](const Tensor& y) {
                          const double g = y.grad()[0] * g_scale;
                          auto ds = sim.mutable_grad();
                          for (std::size_t t = 0; t < coef.size(); ++t) ds[t] += g * coef[t];
                        });
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  return matmul(normalize_rows(a), transpose(normalize_rows(b)));
}

IndexSets sentence_positives(const AugmentedBatch& batch) {
  const std::size_t n = batch.labels.size();
  IndexSets pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    pos[i].push_back(batch.same_origin[i]);
    for (std::size_t h : batch.entail_pos[i]) pos[i].push_back(n + h);
  }
  return pos;
}

IndexSets sentence_denominators(const AugmentedBatch& batch) {
  const std::size_t n = batch.labels.size();
  std::set<std::size_t> members;
  for (std::size_t k = 0; k < n; ++k) {
    members.insert(batch.same_origin[k]);
    for (std::size_t h : batch.entail_pos[k]) members.insert(n + h);
    for (std::size_t h : batch.contra_neg[k]) members.insert(n + h);
  }
  IndexSets denom(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m : members) {
      if (m != i) denom[i].push_back(m);
    }
  }
  return denom;
}

Tensor sentence_scl(const Tensor& prem_embs, const Tensor& hyp_embs, const AugmentedBatch& batch,
                    double tau) {
  check_tau(tau);
  const std::size_t n = batch.labels.size();
  if (prem_embs.dim() != 2 || prem_embs.rows() != n || hyp_embs.shape() != prem_embs.shape()) {
    throw DimensionError("sentence_scl: embeddings " + shape_str(prem_embs.shape()) + " / " +
                         shape_str(hyp_embs.shape()) + " for a batch of " + std::to_string(n) + " views");
  }
  Tensor candidates = transpose(concat_cols({transpose(prem_embs), transpose(hyp_embs)}));
  return masked_contrastive(cosine_matrix(prem_embs, candidates), sentence_positives(batch),
                            sentence_denominators(batch), tau);
}

Tensor pair_scl(const Tensor& zs, std::span<const int> labels, double tau) {
  check_tau(tau);
  const std::size_t n = labels.size();
  if (zs.dim() != 2 || zs.rows() != n) {
    throw DimensionError("pair_scl: " + shape_str(zs.shape()) + " for " + std::to_string(n) + " labels");
  }
  IndexSets pos(n), denom(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      denom[i].push_back(j);
      if (labels[j] == labels[i]) pos[i].push_back(j);
    }
  }
  return masked_contrastive(cosine_matrix(zs, zs), pos, denom, tau);
}

Tensor classification_loss(const ClassifierParams& params, const Tensor& zs, std::span<const int> labels) {
  return cross_entropy(classifier_logits(params, zs), labels);
}

LossBreakdown total_loss(const Tensor& ce, const Tensor& scl_sent, const Tensor& scl_pair, double alpha,
                         double beta, double tau) {
  LossBreakdown out;
  out.ce = ce;
  out.scl_sent = scl_sent;
  out.scl_pair = scl_pair;
  out.total = add(add(ce, scale(scl_sent, alpha)), scale(scl_pair, beta));
  out.tau = tau;
  out.alpha = alpha;
  out.beta = beta;
  return out;
}

}  // namespace multiscl
