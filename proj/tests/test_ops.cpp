#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "robustlab/ops.hpp"
#include "robustlab/rng.hpp"

using namespace robustlab;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool rg = false) {
  Tensor t = Tensor::zeros(std::move(shape), rg);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

}  // namespace

// ---- cross entropy -----------------------------------------------------------

TEST_CASE("cross entropy of uniform logits is ln K") {
  Tensor logits = Tensor::zeros({4, 10});
  Tensor loss = cross_entropy(logits, {0, 3, 5, 9});
  CHECK(loss.item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy approaches zero in the perfect-confidence limit") {
  Tensor logits = Tensor::zeros({1, 10});
  logits.at(7) = 1e4;  // effectively infinite margin
  Tensor loss = cross_entropy(logits, {7});
  CHECK(loss.item() < 1e-12);
  CHECK(loss.item() >= 0.0);
}

TEST_CASE("cross entropy direct evaluation: logits (1,2,3), label 2") {
  Tensor logits = Tensor::from({1, 3}, {1.0, 2.0, 3.0});
  Tensor loss = cross_entropy(logits, {2});
  // oracle: -log(e^3 / (e + e^2 + e^3)) = log(1 + e^-1 + e^-2)
  const double expected = std::log(1.0 + std::exp(-1.0) + std::exp(-2.0));
  CHECK(expected == doctest::Approx(0.40760596444438080).epsilon(1e-14));
  CHECK(loss.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  Tensor logits = Tensor::zeros({2, 3});
  CHECK_THROWS(cross_entropy(logits, {0, 3}));
  CHECK_THROWS(cross_entropy(logits, {-1, 0}));
  CHECK_THROWS(cross_entropy(logits, {0}));  // count mismatch
}

TEST_CASE("cross entropy is non-negative and translation invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_tensor({5, 7}, rng, -30.0, 30.0);
    std::vector<int64_t> labels;
    for (int64_t b = 0; b < 5; ++b) labels.push_back(static_cast<int64_t>(rng.randint(7)));
    const double base = cross_entropy(logits, labels).item();
    CHECK(base >= 0.0);
    const double shift = rng.uniform(-50.0, 50.0);
    Tensor shifted = add_scalar(logits, shift);
    CHECK(std::abs(cross_entropy(shifted, labels).item() - base) < 1e-10);
  }
}

TEST_CASE("cross entropy gradient matches finite differences") {
  Rng rng(12);
  Tensor logits = random_tensor({3, 4}, rng, -2.0, 2.0, true);
  std::vector<int64_t> labels = {1, 0, 3};
  backward(cross_entropy(logits, labels));
  auto loss_fn = [&]() { return static_cast<double>(cross_entropy(logits.detached_copy(), labels).item()); };
  CHECK(oracles::max_grad_rel_err(logits, oracles::finite_diff(logits, loss_fn)) < 1e-6);
}

// ---- cw margin -----------------------------------------------------------------

TEST_CASE("cw margin clamps at -kappa") {
  Tensor logits = Tensor::from({1, 3}, {2.0, 5.0, 0.0});
  Tensor f = cw_margin(logits, {0}, 1.5);
  CHECK(f.at(0) == doctest::Approx(-1.5));  // max(-1.5, 2-5)
}

TEST_CASE("cw margin is the logit margin before success") {
  Tensor logits = Tensor::from({1, 3}, {4.0, 1.0, 3.0});
  Tensor f = cw_margin(logits, {0}, 1.5);
  CHECK(f.at(0) == doctest::Approx(1.0));
  CHECK(f.at(0) >= 0.0);
}

TEST_CASE("cw margin gradient hits label and best-other logits only") {
  Tensor logits = Tensor::from({1, 4}, {2.0, 0.5, 1.5, -1.0}, true);
  backward(sum(cw_margin(logits, {0}, 1.5)));
  CHECK(logits.grad()[0] == doctest::Approx(1.0));
  CHECK(logits.grad()[2] == doctest::Approx(-1.0));
  CHECK(logits.grad()[1] == 0.0);
  CHECK(logits.grad()[3] == 0.0);
}

// ---- conv ------------------------------------------------------------------------

TEST_CASE("conv2d matches a direct nested-loop oracle") {
  Rng rng(13);
  const int64_t B = 2, C = 3, H = 7, W = 6, F = 4, k = 3, s = 2, p = 1;
  Tensor x = random_tensor({B, C, H, W}, rng);
  Tensor w = random_tensor({F, C, k, k}, rng);
  Tensor b = random_tensor({F}, rng);
  Tensor y = conv2d(x, w, b, s, p);
  const int64_t Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
  REQUIRE(y.shape() == Shape{B, F, Ho, Wo});
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t f = 0; f < F; ++f)
      for (int64_t oi = 0; oi < Ho; ++oi)
        for (int64_t oj = 0; oj < Wo; ++oj) {
          double acc = b.at(f);
          for (int64_t c = 0; c < C; ++c)
            for (int64_t ki = 0; ki < k; ++ki)
              for (int64_t kj = 0; kj < k; ++kj) {
                const int64_t i = oi * s - p + ki, j = oj * s - p + kj;
                if (i >= 0 && i < H && j >= 0 && j < W)
                  acc += x.at(((bi * C + c) * H + i) * W + j) * w.at(((f * C + c) * k + ki) * k + kj);
              }
          CHECK(y.at(((bi * F + f) * Ho + oi) * Wo + oj) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(14);
  const int64_t B = 2, C = 2, H = 5, W = 5, F = 3, k = 4, s = 2, p = 1;
  Tensor x = random_tensor({B, C, H, W}, rng, -1, 1, true);
  Tensor w = random_tensor({F, C, k, k}, rng, -1, 1, true);
  Tensor b = random_tensor({F}, rng, -1, 1, true);
  backward(mean(square(conv2d(x, w, b, s, p))));
  auto loss_fn = [&]() {
    return static_cast<double>(mean(square(conv2d(x.detached_copy(), w.detached_copy(), b.detached_copy(), s, p))).item());
  };
  CHECK(oracles::max_grad_rel_err(x, oracles::finite_diff(x, loss_fn)) < 1e-4);
  CHECK(oracles::max_grad_rel_err(w, oracles::finite_diff(w, loss_fn)) < 1e-4);
  CHECK(oracles::max_grad_rel_err(b, oracles::finite_diff(b, loss_fn)) < 1e-4);
}

// ---- batch norm -------------------------------------------------------------------

TEST_CASE("batchnorm eval mode is a pure function: two calls agree bit-exactly") {
  Rng rng(15);
  Tensor x = random_tensor({4, 3, 5, 5}, rng);
  Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({3}, rng);
  std::vector<real_t> rm = {0.1, -0.2, 0.3}, rv = {1.0, 2.0, 0.5};
  auto rm2 = rm;
  auto rv2 = rv;
  Tensor y1 = batchnorm(x, gamma, beta, rm, rv, /*training=*/false);
  Tensor y2 = batchnorm(x, gamma, beta, rm2, rv2, false);
  for (int64_t i = 0; i < y1.numel(); ++i) CHECK(y1.at(i) == y2.at(i));
  CHECK(rm == rm2);  // eval never touches running stats
}

TEST_CASE("batchnorm train mode normalizes batch statistics") {
  Rng rng(16);
  Tensor x = random_tensor({8, 2}, rng, -3.0, 5.0);
  Tensor gamma = Tensor::full({2}, 1.0);
  Tensor beta = Tensor::zeros({2});
  std::vector<real_t> rm = {0, 0}, rv = {1, 1};
  Tensor y = batchnorm(x, gamma, beta, rm, rv, true);
  for (int64_t c = 0; c < 2; ++c) {
    double s = 0, s2 = 0;
    for (int64_t b = 0; b < 8; ++b) {
      s += y.at(b * 2 + c);
      s2 += y.at(b * 2 + c) * y.at(b * 2 + c);
    }
    CHECK(s / 8 == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(s2 / 8 == doctest::Approx(1.0).epsilon(1e-4));  // eps shifts variance slightly
  }
  CHECK(rm[0] != 0.0);  // running stats updated in train mode
}

TEST_CASE("batchnorm gradients match finite differences (train and eval)") {
  Rng rng(17);
  for (bool training : {true, false}) {
    Tensor x = random_tensor({4, 2, 3, 3}, rng, -2, 2, true);
    Tensor gamma = random_tensor({2}, rng, 0.5, 1.5, true);
    Tensor beta = random_tensor({2}, rng, -0.5, 0.5, true);
    std::vector<real_t> rm = {0.05, -0.1}, rv = {0.9, 1.2};
    auto fwd = [&](const Tensor& xx, const Tensor& g, const Tensor& bt) {
      auto rmc = rm;
      auto rvc = rv;  // keep stats fixed across FD evaluations
      return mean(square(batchnorm(xx, g, bt, rmc, rvc, training)));
    };
    backward(fwd(x, gamma, beta));
    auto loss_fn = [&]() {
      return static_cast<double>(fwd(x.detached_copy(), gamma.detached_copy(), beta.detached_copy()).item());
    };
    CHECK(oracles::max_grad_rel_err(x, oracles::finite_diff(x, loss_fn)) < 1e-4);
    CHECK(oracles::max_grad_rel_err(gamma, oracles::finite_diff(gamma, loss_fn)) < 1e-4);
    CHECK(oracles::max_grad_rel_err(beta, oracles::finite_diff(beta, loss_fn)) < 1e-4);
  }
}

// ---- affine warp -----------------------------------------------------------------

TEST_CASE("identity warp is bit-exact") {
  Rng rng(18);
  Tensor x = random_tensor({2, 1, 9, 7}, rng, 0.0, 1.0);
  Tensor theta = Tensor::zeros({2, 2, 3});
  for (int64_t b = 0; b < 2; ++b) {
    theta.at(b * 6 + 0) = 1.0;
    theta.at(b * 6 + 4) = 1.0;
  }
  Tensor y = affine_warp(x, theta);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("one-pixel translation matches the index-shift oracle") {
  Rng rng(19);
  const int64_t H = 8, W = 8;
  Tensor x = random_tensor({1, 1, H, W}, rng, 0.0, 1.0);
  // sampling-grid translation by exactly one pixel in normalized units reads
  // source pixel (i, j+1) into output (i, j)
  Tensor theta = Tensor::from({1, 2, 3}, {1.0, 0.0, 2.0 / (W - 1), 0.0, 1.0, 0.0});
  Tensor y = affine_warp(x, theta);
  for (int64_t i = 0; i < H; ++i)
    for (int64_t j = 0; j < W; ++j) {
      const double expected = (j + 1 < W) ? x.at(i * W + j + 1) : 0.0;  // zero padding at the edge
      CHECK(y.at(i * W + j) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("90-degree rotation matches the coordinate-permutation oracle") {
  const int64_t N = 4;
  // asymmetric test pattern
  std::vector<real_t> pat(N * N);
  for (int64_t i = 0; i < N * N; ++i) pat[static_cast<size_t>(i)] = static_cast<real_t>(i * i % 13) / 13.0;
  Tensor x = Tensor::from({1, 1, N, N}, pat);
  Tensor theta = Tensor::from({1, 2, 3}, {0.0, -1.0, 0.0, 1.0, 0.0, 0.0});
  Tensor y = affine_warp(x, theta);
  // sample coords: u=-gy -> column (N-1-i), v=gx -> row j
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < N; ++j) CHECK(y.at(i * N + j) == doctest::Approx(x.at(j * N + (N - 1 - i))).epsilon(1e-9));
}

TEST_CASE("warp gradients wrt image and matrix match finite differences") {
  Rng rng(20);
  Tensor x = random_tensor({1, 1, 6, 6}, rng, 0.0, 1.0, true);
  Tensor theta = Tensor::from({1, 2, 3}, {0.9, 0.1, 0.05, -0.12, 1.05, -0.03}, true);
  backward(mean(square(affine_warp(x, theta))));
  auto loss_fn = [&]() {
    return static_cast<double>(mean(square(affine_warp(x.detached_copy(), theta.detached_copy()))).item());
  };
  CHECK(oracles::max_grad_rel_err(x, oracles::finite_diff(x, loss_fn)) < 1e-4);
  CHECK(oracles::max_grad_rel_err(theta, oracles::finite_diff(theta, loss_fn)) < 1e-4);
}

// ---- pose matrix -----------------------------------------------------------------

TEST_CASE("pose matrix: identity, translation, quarter rotation") {
  // identity pose
  Tensor p0 = Tensor::from({1, 6}, {0, 0, 0, 0, 1, 0});
  Tensor m0 = pose_matrix(p0);
  const std::vector<double> id = {1, 0, 0, 0, 1, 0};
  for (int i = 0; i < 6; ++i) CHECK(m0.at(i) == doctest::Approx(id[static_cast<size_t>(i)]).epsilon(1e-15));

  // pure translation
  Tensor pt = Tensor::from({1, 6}, {0.07, -0.04, 0, 0, 1, 0});
  Tensor mt = pose_matrix(pt);
  CHECK(mt.at(2) == doctest::Approx(0.07));
  CHECK(mt.at(5) == doctest::Approx(-0.04));
  CHECK(mt.at(0) == doctest::Approx(1.0));

  // r = pi/2: [[0,-1,0],[1,0,0]] by substitution into the matrix formula
  Tensor pr = Tensor::from({1, 6}, {0, 0, 0, 0, 1, std::numbers::pi / 2});
  Tensor mr = pose_matrix(pr);
  CHECK(std::abs(mr.at(0)) < 1e-15);
  CHECK(mr.at(1) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(mr.at(3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(mr.at(4)) < 1e-15);
}

TEST_CASE("pose matrix is continuous: finite-difference sensitivity is O(1)") {
  Rng rng(21);
  Tensor pose = Tensor::from({1, 6}, {0.1, -0.1, 0.3, -0.2, 0.9, 0.7}, true);
  backward(sum(square(pose_matrix(pose))));
  auto loss_fn = [&]() { return static_cast<double>(sum(square(pose_matrix(pose.detached_copy()))).item()); };
  CHECK(oracles::max_grad_rel_err(pose, oracles::finite_diff(pose, loss_fn)) < 1e-6);
}

TEST_CASE("argmax ties break toward the lowest class index") {
  Tensor logits = Tensor::from({2, 3}, {1.0, 1.0, 0.5, 0.2, 0.7, 0.7});
  auto pred = argmax_rows(logits);
  CHECK(pred[0] == 0);
  CHECK(pred[1] == 1);
}
