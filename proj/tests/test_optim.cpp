#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "robustlab/optim.hpp"
#include "robustlab/tensor.hpp"

using namespace robustlab;

TEST_CASE("zero gradient with zero weight decay is a no-op on params") {
  Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  Adam opt({p}, {});
  backward(mul_scalar(sum(p), 0.0));  // populates zero grads
  opt.step();
  CHECK(p.at(0) == 1.0);
  CHECK(p.at(1) == -2.0);
  CHECK(p.at(2) == 0.5);
}

TEST_CASE("first step with constant scalar gradient is ~ -lr * sign(g)") {
  for (double g : {0.37, -1.4, 250.0}) {
    Tensor p = Tensor::scalar(0.0, true);
    AdamConfig cfg;
    cfg.lr = 0.01;
    Adam opt({p}, cfg);
    p.node()->ensure_grad();
    p.grad_mut()[0] = static_cast<real_t>(g);
    opt.step();
    // bias-corrected first step: -lr * g / (|g| + eps)
    CHECK(std::abs(p.at(0) - (-0.01 * (g > 0 ? 1.0 : -1.0))) < 1e-6 * 0.01 * 10);
  }
}

TEST_CASE("two steps with constant gradient match a hand-unrolled recurrence") {
  const double g = 0.8, lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor p = Tensor::scalar(1.0, true);
  AdamConfig cfg;
  cfg.lr = lr;
  Adam opt({p}, cfg);

  // oracle: unroll the published recurrences by hand
  double m = 0, v = 0, theta = 1.0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    theta -= lr * mhat / (std::sqrt(vhat) + eps);
  }

  for (int t = 0; t < 2; ++t) {
    p.zero_grad();
    p.node()->ensure_grad();
    p.grad_mut()[0] = static_cast<real_t>(g);
    opt.step();
  }
  CHECK(p.at(0) == doctest::Approx(theta).epsilon(1e-12));
}

TEST_CASE("non-finite gradients are rejected and leave params and state unchanged") {
  Tensor p = Tensor::from({2}, {1.0, 2.0}, true);
  Adam opt({p}, {});
  p.node()->ensure_grad();
  p.grad_mut()[0] = std::numeric_limits<real_t>::quiet_NaN();
  CHECK_THROWS(opt.step());
  CHECK(p.at(0) == 1.0);
  CHECK(opt.step_count() == 0);

  // a valid step afterwards behaves like the very first step
  p.grad_mut()[0] = 1.0;
  p.grad_mut()[1] = 0.0;
  opt.step();
  CHECK(opt.step_count() == 1);
  CHECK(p.at(0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(p.at(1) == 2.0);
}

TEST_CASE("weight decay acts as an L2 term added to the gradient") {
  Tensor p = Tensor::scalar(2.0, true);
  AdamConfig cfg;
  cfg.weight_decay = 0.5;
  cfg.lr = 0.1;
  Adam opt({p}, cfg);
  p.node()->ensure_grad();
  p.grad_mut()[0] = 0.0;  // pure decay: effective grad = wd * p = 1.0
  opt.step();
  CHECK(p.at(0) == doctest::Approx(2.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("epoch boundaries decay the learning rate multiplicatively") {
  Tensor p = Tensor::scalar(0.0, true);
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.lr_decay = 0.95;
  Adam opt({p}, cfg);
  CHECK(opt.current_lr() == doctest::Approx(0.01));
  opt.advance_epoch();
  CHECK(opt.current_lr() == doctest::Approx(0.0095));
  opt.advance_epoch();
  CHECK(opt.current_lr() == doctest::Approx(0.01 * 0.95 * 0.95));
}
