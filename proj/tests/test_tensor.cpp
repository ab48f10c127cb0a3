#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "multiscl/tensor.hpp"
#include "test_util.hpp"

using namespace multiscl;
using multiscl::test::max_grad_error;
using multiscl::test::random_tensor;
using multiscl::test::to_vec;
using multiscl::test::weighted_sum;

TEST_CASE("matmul basics") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(to_vec(matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});

  auto row = Tensor::from({1, 2}, {1, 0});
  auto col = Tensor::from({2, 1}, {0, 5});
  auto r = matmul(row, col);
  CHECK(r.shape() == Shape{1, 1});
  CHECK(r.item() == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("and [2x3]") != std::string::npos);
  }
}

TEST_CASE("grad of sum(A x B) w.r.t. A is ones x B^T") {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  backward(sum(matmul(a, b)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 4; ++p) {
      const double expect = b.at(p, 0) + b.at(p, 1);
      CHECK(a.grad()[i * 4 + p] == doctest::Approx(expect).epsilon(1e-14));
    }
  a.clear_grad();
  b.clear_grad();
  CHECK(max_grad_error([&] { return sum(matmul(a, b)); }, {a, b}) < 1e-5);
}

TEST_CASE("softmax_rows examples") {
  auto s = softmax_rows(Tensor::from({1, 2}, {0, 0}));
  CHECK(s.at(0) == 0.5);
  CHECK(s.at(1) == 0.5);

  auto big = softmax_rows(Tensor::from({1, 2}, {1000, 0}));
  CHECK(big.at(0) == 1.0);
  CHECK(big.at(1) < 1e-300);

  auto logs = softmax_rows(Tensor::from({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(logs.at(0) == doctest::Approx(1.0 / 6).epsilon(1e-14));
  CHECK(logs.at(1) == doctest::Approx(2.0 / 6).epsilon(1e-14));
  CHECK(logs.at(2) == doctest::Approx(3.0 / 6).epsilon(1e-14));
}

TEST_CASE("softmax_rows rows sum to one and ignore row shifts") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({4, 7}, rng, -30, 30, false);
    auto y = softmax_rows(x);
    auto shifted = x.clone(false);
    for (std::size_t j = 0; j < 7; ++j) shifted.mutable_data()[2 * 7 + j] += 123.5;
    auto ys = softmax_rows(shifted);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(y.at(i, j) >= 0.0);
        s += y.at(i, j);
        CHECK(ys.at(i, j) == doctest::Approx(y.at(i, j)).epsilon(1e-12));
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax_rows rejects NaN") {
  auto x = Tensor::from({1, 2}, {std::numeric_limits<double>::quiet_NaN(), 0});
  CHECK_THROWS_AS(softmax_rows(x), NumericError);
}

TEST_CASE("layer_norm examples and moments") {
  auto ones = Tensor::full({2}, 1.0);
  auto zeros = Tensor::zeros({2});
  auto y = layer_norm(Tensor::from({1, 2}, {1, 3}), ones, zeros, 1e-5);
  CHECK(y.at(0) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y.at(1) == doctest::Approx(1.0).epsilon(1e-5));

  auto c = layer_norm(Tensor::from({1, 3}, {5, 5, 5}), Tensor::full({3}, 1.0), Tensor::zeros({3}), 1e-5);
  for (double v : c.data()) CHECK(v == 0.0);

  std::mt19937_64 rng(4);
  auto x = random_tensor({5, 8}, rng, -3, 3, false);
  auto n = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}), 1e-5);
  for (std::size_t i = 0; i < 5; ++i) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < 8; ++j) mean += n.at(i, j);
    mean /= 8;
    for (std::size_t j = 0; j < 8; ++j) var += (n.at(i, j) - mean) * (n.at(i, j) - mean);
    var /= 8;
    CHECK(std::abs(mean) < 1e-9);
    // eps shrinks the variance by var/(var+eps); rows here have var ~ 3.
    CHECK(std::abs(var - 1.0) < 1e-5);
  }
  CHECK_THROWS_AS(layer_norm(Tensor::zeros({1, 1}), Tensor::full({1}, 1.0), Tensor::zeros({1}), 1e-5),
                  DimensionError);
}

TEST_CASE("layer_norm affine: doubling gamma doubles the output when beta = 0") {
  std::mt19937_64 rng(12);
  auto x = random_tensor({3, 6}, rng, -1, 1, false);
  auto g = random_tensor({6}, rng, 0.5, 1.5, false);
  auto g2 = Tensor::from({6}, to_vec(scale(g, 2.0)));
  auto y1 = layer_norm(x, g, Tensor::zeros({6}), 1e-5);
  auto y2 = layer_norm(x, g2, Tensor::zeros({6}), 1e-5);
  for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y2.at(i) == doctest::Approx(2 * y1.at(i)).epsilon(1e-14));
}

TEST_CASE("elementwise examples") {
  auto x = Tensor::from({2}, {-1, 2}, true);
  auto r = relu(x);
  CHECK(to_vec(r) == std::vector<double>{0, 2});
  backward(sum(r));
  CHECK(to_vec(Tensor::from({2}, {x.grad()[0], x.grad()[1]})) == std::vector<double>{0, 1});

  auto z = Tensor::from({1}, {0.0}, true);
  backward(sum(relu(z)));
  CHECK(z.grad()[0] == 0.0);

  CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(to_vec(mul(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}))) == std::vector<double>{3, 8});
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("pool examples") {
  auto one = Tensor::from({1, 2}, {2, 7});
  CHECK(to_vec(pool(one, PoolKind::Mean)) == std::vector<double>{2, 7});
  CHECK(to_vec(pool(one, PoolKind::Max)) == std::vector<double>{2, 7});
  CHECK(to_vec(pool(Tensor::from({2, 2}, {0, 0, 2, 4}), PoolKind::Mean)) == std::vector<double>{1, 2});
  CHECK(to_vec(pool(Tensor::from({2, 2}, {0, 9, 8, 1}), PoolKind::Max)) == std::vector<double>{8, 9});
  CHECK_THROWS_AS(pool(Tensor::zeros({0, 3}), PoolKind::Mean), DimensionError);
}

TEST_CASE("max pool routes ties to the first row") {
  auto x = Tensor::from({3, 1}, {4, 4, 1}, true);
  backward(sum(pool(x, PoolKind::Max)));
  CHECK(to_vec(Tensor::from({3}, {x.grad()[0], x.grad()[1], x.grad()[2]})) == std::vector<double>{1, 0, 0});
}

TEST_CASE("cosine_sim examples") {
  CHECK(cosine_sim(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1})).item() == 0.0);
  CHECK(cosine_sim(Tensor::from({2}, {2, 0}), Tensor::from({2}, {5, 0})).item() == 1.0);
  CHECK(cosine_sim(Tensor::from({2}, {1, 1}), Tensor::from({2}, {1, 0})).item() ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_sim(Tensor::from({2}, {0, 0}), Tensor::from({2}, {1, 0})), NumericError);
}

TEST_CASE("backward examples and graph rules") {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  auto loss = sum(x);
  backward(loss);
  CHECK(to_vec(Tensor::from({3}, {x.grad()[0], x.grad()[1], x.grad()[2]})) == std::vector<double>{1, 1, 1});
  CHECK(loss.grad()[0] == 1.0);
  CHECK_THROWS_AS(backward(loss), GraphError);

  auto s = Tensor::scalar(3.0, true);
  backward(mul(s, s));
  CHECK(s.grad()[0] == 6.0);

  CHECK_THROWS_AS(backward(Tensor::zeros({2}, true)), GraphError);
}

TEST_CASE("fan-out accumulates gradients") {
  auto x = Tensor::from({2}, {1.5, -2.0}, true);
  auto y = tanh(x);
  backward(sum(add(y, scale(y, 3.0))));
  for (std::size_t i = 0; i < 2; ++i) {
    const double t = std::tanh(x.at(i));
    CHECK(x.grad()[i] == doctest::Approx(4.0 * (1 - t * t)).epsilon(1e-14));
  }
}

TEST_CASE("no-grad mode builds no graph") {
  auto x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard g;
  auto y = sum(x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.is_leaf());
}

TEST_CASE("every differentiable op passes a central finite-difference check") {
  std::mt19937_64 rng(21);
  const double tol = 1e-5;
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto c = random_tensor({4, 5}, rng);
  auto v = random_tensor({4}, rng);
  auto w = random_tensor({4}, rng);
  auto g = random_tensor({4}, rng, 0.5, 1.5);
  auto bt = random_tensor({4}, rng);
  auto table = random_tensor({6, 4}, rng);
  // relu/max pool kinks: keep inputs away from 0 and from ties.
  auto pos = random_tensor({3, 4}, rng, 0.2, 1.0);
  for (std::size_t i = 0; i < pos.size(); i += 2) pos.mutable_data()[i] *= -1;

  CHECK(max_grad_error([&] { return weighted_sum(matmul(a, c)); }, {a, c}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(transpose(a)); }, {a}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(reshape(a, {2, 6})); }, {a}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(add(a, b)); }, {a, b}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(sub(a, b)); }, {a, b}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(mul(a, b)); }, {a, b}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(add_row(a, v)); }, {a, v}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(scale(a, -2.5)); }, {a}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(relu(pos)); }, {pos}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(tanh(a)); }, {a}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(exp(a)); }, {a}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(log(g)); }, {g}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(softmax_rows(a)); }, {a}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(layer_norm(a, g, bt, 1e-5)); }, {a, g, bt}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(pool(a, PoolKind::Mean)); }, {a}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(pool(pos, PoolKind::Max)); }, {pos}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(normalize_rows(a)); }, {a}) < tol);
  CHECK(max_grad_error([&] { return cosine_sim(v, w); }, {v, w}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(concat_cols({a, b})); }, {a, b}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(concat({v, w})); }, {v, w}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(stack_rows({v, w, v})); }, {v, w}) < tol);
  const std::size_t ids[] = {2, 0, 2, 5};
  CHECK(max_grad_error([&] { return weighted_sum(gather_rows(table, ids)); }, {table}) < tol);
  CHECK(max_grad_error([&] { return weighted_sum(pairwise_mul(a, b)); }, {a, b}) < tol);
  const int labels[] = {0, 2, 3};
  CHECK(max_grad_error([&] { return cross_entropy(a, labels); }, {a}) < tol);
}

TEST_CASE("cross_entropy closed forms and label checks") {
  const int y0[] = {0};
  CHECK(std::abs(cross_entropy(Tensor::zeros({1, 3}), y0).item() - std::log(3.0)) <= 1e-12);
  // -log(e^10 / (e^10 + 2)) = log(1 + 2e^-10)
  CHECK(cross_entropy(Tensor::from({1, 3}, {10, 0, 0}), y0).item() ==
        doctest::Approx(std::log1p(2 * std::exp(-10.0))).epsilon(1e-12));
  const int bad[] = {3};
  CHECK_THROWS_AS(cross_entropy(Tensor::zeros({1, 3}), bad), std::out_of_range);
}

TEST_CASE("ops are bit-deterministic") {
  std::mt19937_64 rng(31);
  auto a = random_tensor({5, 9}, rng);
  auto b = random_tensor({9, 4}, rng);
  auto g = random_tensor({4}, rng);
  auto run = [&] {
    return to_vec(layer_norm(softmax_rows(matmul(a, b)), g, g, 1e-5));
  };
  CHECK(run() == run());
}

TEST_CASE("injected backward fault is visible to the gradient check") {
  std::mt19937_64 rng(41);
  auto a = random_tensor({2, 3}, rng);
  testing::inject_backward_fault(OpKind::Tanh);
  const double err = max_grad_error([&] { return weighted_sum(tanh(a)); }, {a});
  testing::inject_backward_fault(OpKind::Leaf);
  CHECK(err > 0.1);
}
