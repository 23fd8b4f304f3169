#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "robustlab/rng.hpp"
#include "robustlab/tensor.hpp"

using namespace robustlab;

TEST_CASE("square loss gradient: d(x^2)/dx = 2x at x=3") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor loss = square(x);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("relu gates gradients: sum(relu(x)) at (-1,2) -> grad (0,1)") {
  Tensor x = Tensor::from({2}, {-1.0, 2.0}, true);
  Tensor loss = sum(relu(x));
  backward(loss);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("backward rejects untaped tensors and consumed tapes") {
  Tensor leaf = Tensor::scalar(1.0, true);
  CHECK_THROWS(backward(leaf));

  Tensor loss = square(leaf);
  backward(loss);
  CHECK_THROWS(backward(loss));  // tape consumed

  Tensor no_grad = square(Tensor::scalar(2.0, false));
  CHECK_THROWS(backward(no_grad));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::from({3}, {1.0, 2.0, 3.0}, true);
  CHECK_THROWS(backward(relu(x)));
}

TEST_CASE("elementwise shape mismatches are rejected with diagnostics") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("shape mismatch"), std::invalid_argument);
  CHECK_THROWS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})));
}

TEST_CASE("grad buffers allocate lazily and accumulate across backward calls") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK(x.grad().empty());
  backward(sum(mul(x, x)));
  backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(4.0));  // 2x accumulated twice
  CHECK(x.grad()[1] == doctest::Approx(8.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("matmul matches hand computation and differentiates") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12}, true);
  Tensor c = matmul(a, b);
  CHECK(c.at(0) == doctest::Approx(58.0));
  CHECK(c.at(1) == doctest::Approx(64.0));
  CHECK(c.at(2) == doctest::Approx(139.0));
  CHECK(c.at(3) == doctest::Approx(154.0));

  auto loss_fn = [&]() {
    Tensor out = matmul(a.detached_copy(), b.detached_copy());
    double acc = 0;
    for (int64_t i = 0; i < out.numel(); ++i) acc += out.at(i) * out.at(i);
    return acc;
  };
  backward(sum(square(c)));
  CHECK(oracles::max_grad_rel_err(a, oracles::finite_diff(a, loss_fn)) < 1e-6);
  CHECK(oracles::max_grad_rel_err(b, oracles::finite_diff(b, loss_fn)) < 1e-6);
}

TEST_CASE("gradients of composed primitives match finite differences") {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    const int64_t n = 6;
    std::vector<real_t> xv(n), yv(n);
    for (auto& v : xv) v = rng.uniform(-2.0, 2.0);
    for (auto& v : yv) v = rng.uniform(0.2, 2.0);
    Tensor x = Tensor::from({n}, xv, true);
    Tensor y = Tensor::from({n}, yv, true);

    auto build = [&](const Tensor& xx, const Tensor& yy) {
      Tensor t = add(mul(sigmoid(xx), tanh_op(yy)), exp_op(mul_scalar(xx, real_t(0.3))));
      t = add(t, log_op(yy));
      t = sub(t, abs_op(xx));
      t = add(t, clamp_op(xx, real_t(-1), real_t(1)));
      return mean(square(t));
    };
    Tensor loss = build(x, y);
    backward(loss);
    auto loss_fn = [&]() { return static_cast<double>(build(x.detached_copy(), y.detached_copy()).item()); };
    CHECK(oracles::max_grad_rel_err(x, oracles::finite_diff(x, loss_fn)) < 1e-4);
    CHECK(oracles::max_grad_rel_err(y, oracles::finite_diff(y, loss_fn)) < 1e-4);
  }
}

TEST_CASE("rowwise_l2 values and guarded gradient") {
  Tensor a = Tensor::from({2, 2}, {3.0, 4.0, 0.0, 0.0}, true);
  Tensor norms = rowwise_l2(a);
  CHECK(norms.at(0) == doctest::Approx(5.0));
  CHECK(norms.at(1) == 0.0);
  backward(sum(norms));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(a.grad()[1] == doctest::Approx(0.8));
  CHECK(a.grad()[2] == 0.0);  // subgradient at the origin
  CHECK(a.grad()[3] == 0.0);
}

TEST_CASE("take_row and reshape route gradients to the right slots") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  backward(sum(square(take_row(a, 1))));
  CHECK(a.grad()[0] == 0.0);
  CHECK(a.grad()[3] == doctest::Approx(8.0));
  CHECK(a.grad()[5] == doctest::Approx(12.0));

  Tensor b = Tensor::from({4}, {1, 2, 3, 4}, true);
  backward(sum(square(reshape(b, {2, 2}))));
  CHECK(b.grad()[2] == doctest::Approx(6.0));
  CHECK_THROWS(reshape(b, {3, 2}));
}
