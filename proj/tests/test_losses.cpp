#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "multiscl/losses.hpp"
#include "loss_oracles.hpp"
#include "test_util.hpp"

using namespace multiscl;
using namespace multiscl::test;

TEST_CASE("sentence_scl matches the nested-loop oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    auto b = batch_for(random_labels(4, rng));
    auto prem = random_tensor({8, 5}, rng), hyp = random_tensor({8, 5}, rng);
    for (double tau : {0.08, 0.5}) {
      CHECK(std::abs(sentence_scl(prem, hyp, b, tau).item() - oracle_sentence(prem, hyp, b.labels, tau)) < 1e-10);
    }
  }
}

TEST_CASE("pair_scl matches the nested-loop oracle") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> labels = random_labels(8, rng);
    auto z = random_tensor({8, 6}, rng);
    for (double tau : {0.08, 1.0}) {
      CHECK(std::abs(pair_scl(z, labels, tau).item() - oracle_pair(z, labels, tau)) < 1e-10);
    }
  }
}

TEST_CASE("sentence_scl closed forms") {
  // Identical embeddings: each anchor's ratio is 1 / |denominator|.
  auto ones = Tensor::full({4, 3}, 0.5);
  auto ec = batch_for({0, 1});
  CHECK(sentence_scl(ones, ones, ec, 0.08).item() == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  auto nn = batch_for({2, 2});
  CHECK(sentence_scl(ones, ones, nn, 0.08).item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  // Two anchors, sibling only: ratio 1.
  std::mt19937_64 rng(3);
  auto single = batch_for({2});
  CHECK(std::abs(sentence_scl(random_tensor({2, 3}, rng), random_tensor({2, 3}, rng), single, 0.08).item()) < 1e-12);

  auto idx = sentence_denominators(ec);
  CHECK(idx[0] == std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7});
  CHECK(sentence_positives(ec)[0] == std::vector<std::size_t>{1, 4, 5});
  CHECK(sentence_positives(ec)[2] == std::vector<std::size_t>{3});
}

TEST_CASE("pair_scl two-element cases") {
  std::mt19937_64 rng(4);
  auto z = random_tensor({2, 4}, rng);
  const std::vector<int> same{1, 1}, diff{0, 2};
  CHECK(std::abs(pair_scl(z, same, 0.08).item()) <= 1e-12);
  CHECK(pair_scl(z, diff, 0.08).item() == 0.0);
}

TEST_CASE("cross entropy closed forms") {
  ClassifierParams c{Tensor::zeros({3, 4}, true), Tensor::zeros({3}, true)};
  std::mt19937_64 rng(5);
  auto z = random_tensor({6, 4}, rng);
  const std::vector<int> labels{0, 1, 2, 2, 1, 0};
  CHECK(std::abs(classification_loss(c, z, labels).item() - std::log(3.0)) <= 1e-12);

  auto logits = Tensor::from({1, 3}, {10.0, 0.0, 0.0});
  const std::vector<int> y0{0};
  const double expect = std::log1p(2.0 * std::exp(-10.0));
  CHECK(cross_entropy(logits, y0).item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(9.08e-5).epsilon(1e-3));

  auto rc = init_classifier(4, 2);
  for (int t = 0; t < 20; ++t) CHECK(classification_loss(rc, random_tensor({6, 4}, rng, -5, 5), labels).item() >= 0.0);
  const std::vector<int> bad{0, 3, 0, 0, 0, 0};
  CHECK_THROWS_AS(classification_loss(rc, z, bad), std::out_of_range);
}

TEST_CASE("total_loss") {
  auto b = total_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(3.0));
  CHECK(b.total.item() == 6.0);
  CHECK(b.tau == 0.08);
  CHECK(b.alpha == 1.0);
  CHECK(b.beta == 1.0);
  const double ce = 1.0986122886681098;
  auto z = total_loss(Tensor::scalar(ce), Tensor::scalar(0.731), Tensor::scalar(2.9), 0.0, 0.0);
  CHECK(z.total.item() == ce);
  const double s = 0.3, p = 0.7, a = 0.5, bb = 2.0;
  CHECK(total_loss(Tensor::scalar(ce), Tensor::scalar(s), Tensor::scalar(p), a, bb).total.item() ==
        ce + a * s + bb * p);
}

TEST_CASE("permutation invariance") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto sample_labels = random_labels(4, rng);
    auto b = batch_for(sample_labels);
    auto prem = random_tensor({8, 5}, rng), hyp = random_tensor({8, 5}, rng), z = random_tensor({8, 6}, rng);
    auto cls = init_classifier(6, 1);

    std::vector<std::size_t> samples(4);
    std::iota(samples.begin(), samples.end(), 0);
    std::shuffle(samples.begin(), samples.end(), rng);
    std::vector<std::size_t> views;
    std::vector<int> permuted_labels;
    for (std::size_t s : samples) {
      views.insert(views.end(), {2 * s, 2 * s + 1});
      permuted_labels.push_back(sample_labels[s]);
    }
    auto pb = batch_for(permuted_labels);
    auto pprem = permute_rows(prem, views), phyp = permute_rows(hyp, views), pz = permute_rows(z, views);

    CHECK(std::abs(sentence_scl(prem, hyp, b, 0.08).item() - sentence_scl(pprem, phyp, pb, 0.08).item()) < 1e-9);
    CHECK(std::abs(pair_scl(z, b.labels, 0.08).item() - pair_scl(pz, pb.labels, 0.08).item()) < 1e-9);
    CHECK(std::abs(classification_loss(cls, z, b.labels).item() -
                   classification_loss(cls, pz, pb.labels).item()) < 1e-9);
  }
}

TEST_CASE("pair_scl is invariant to positive rescaling") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto labels = random_labels(8, rng);
    auto z = random_tensor({8, 6}, rng);
    for (double c : {0.01, 3.0, 1e4}) {
      CHECK(std::abs(pair_scl(z, labels, 0.08).item() - pair_scl(scale(z, c), labels, 0.08).item()) < 1e-9);
    }
  }
}

TEST_CASE("temperature asymptote of each pair_scl anchor") {
  std::mt19937_64 rng(8);
  const std::vector<int> labels{0, 0, 1, 1, 1, 2, 2, 0};
  auto z = random_tensor({8, 6}, rng);
  auto sim = cosine_matrix(z, z);
  for (std::size_t i = 0; i < 8; ++i) {
    IndexSets pos(8), denom(8);
    for (std::size_t j = 0; j < 8; ++j) {
      if (j == i) continue;
      denom[i].push_back(j);
      if (labels[j] == labels[i]) pos[i].push_back(j);
    }
    const double term = masked_contrastive(sim, pos, denom, 1e6).item();
    // Every l_{i,p} tends to 1/(2K-1); the 1/|P| mean inside the log cancels |P|.
    CHECK(std::abs(term - std::log(7.0)) < 1e-3);
    CHECK(term == doctest::Approx(oracle_pair_term(z, labels, 1e6, i)).epsilon(1e-9));
  }
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    auto b = batch_for(random_labels(2, rng));
    auto prem = random_tensor({4, 3}, rng), hyp = random_tensor({4, 3}, rng), z = random_tensor({4, 5}, rng);
    auto cls = init_classifier(5, 3);
    CHECK(max_grad_error([&] { return sentence_scl(prem, hyp, b, 0.5); }, {prem, hyp}) < 1e-5);
    CHECK(max_grad_error([&] { return pair_scl(z, b.labels, 0.5); }, {z}) < 1e-5);
    CHECK(max_grad_error([&] { return classification_loss(cls, z, b.labels); }, {z, cls.w, cls.b}) < 1e-5);
  }
}

TEST_CASE("loss argument validation") {
  std::mt19937_64 rng(10);
  auto z = random_tensor({2, 3}, rng);
  const std::vector<int> labels{0, 0};
  CHECK_THROWS_AS(pair_scl(z, labels, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(pair_scl(z, labels, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(pair_scl(Tensor::zeros({2, 3}), labels, 0.1), NumericError);
  auto b = batch_for({0});
  CHECK_THROWS_AS(sentence_scl(z, z, b, 0.0), std::invalid_argument);
}
