#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "oracles.hpp"
#include "robustlab/nn.hpp"
#include "robustlab/rng.hpp"
#include "robustlab/serialize.hpp"

using namespace robustlab;

TEST_CASE("zero-weight linear model maps any input to all-zero logits") {
  Classifier m = NetBuilder({5}).linear(4).build(1, 4);
  for (auto& [name, t] : m.named_params())
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = 0.0;
  Rng rng(3);
  Tensor x = Tensor::zeros({2, 5});
  for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(-5, 5);
  Tensor logits = forward(m, x);
  for (int64_t i = 0; i < logits.numel(); ++i) CHECK(logits.at(i) == 0.0);
}

TEST_CASE("identity linear layer passes the input through") {
  Classifier m = NetBuilder({3}).linear(3).build(1, 3);
  for (auto& [name, t] : m.named_params())
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = 0.0;
  Layer& l = m.layers[0];
  for (int64_t i = 0; i < 3; ++i) l.weight.at(i * 3 + i) = 1.0;
  Tensor v = Tensor::from({1, 3}, {0.3, -1.7, 2.2});
  Tensor logits = forward(m, v);
  CHECK(logits.at(0) == doctest::Approx(0.3));
  CHECK(logits.at(1) == doctest::Approx(-1.7));
  CHECK(logits.at(2) == doctest::Approx(2.2));
}

TEST_CASE("random 2-layer mlp matches a straight-line re-implementation to 1e-12") {
  const int64_t din = 6, dh = 5, dout = 3;
  Classifier m = NetBuilder({din}).linear(dh).relu().linear(dout).build(99, dout);
  Rng rng(4);
  Tensor x = Tensor::zeros({1, din});
  for (int64_t i = 0; i < din; ++i) x.at(i) = rng.uniform(-2, 2);
  Tensor logits = forward(m, x);

  std::vector<double> xv(x.data().begin(), x.data().end());
  std::vector<double> w1(m.layers[0].weight.data().begin(), m.layers[0].weight.data().end());
  std::vector<double> b1(m.layers[0].bias.data().begin(), m.layers[0].bias.data().end());
  std::vector<double> w2(m.layers[2].weight.data().begin(), m.layers[2].weight.data().end());
  std::vector<double> b2(m.layers[2].bias.data().begin(), m.layers[2].bias.data().end());
  auto expected = oracles::mlp2_forward(xv, din, dh, dout, w1, b1, w2, b2);
  for (int64_t k = 0; k < dout; ++k) CHECK(std::abs(logits.at(k) - expected[static_cast<size_t>(k)]) < 1e-12);
}

TEST_CASE("model gradients match central finite differences on a small net") {
  Classifier m = NetBuilder({8}).linear(6).relu().batchnorm().linear(4).build(7, 4);
  Rng rng(8);
  Tensor x = Tensor::zeros({3, 8});
  for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(-1, 1);
  std::vector<int64_t> labels = {0, 2, 3};

  m.set_mode(Mode::Train);
  backward(cross_entropy(forward(m, x), labels));
  for (auto& [name, p] : m.named_params()) {
    auto loss_fn = [&]() {
      Classifier fresh = m.clone();  // keeps running stats fixed per evaluation
      return static_cast<double>(cross_entropy(forward(fresh, x), labels).item());
    };
    INFO("param ", name);
    CHECK(oracles::max_grad_rel_err(p, oracles::finite_diff(p, loss_fn)) < 1e-4);
  }
}

TEST_CASE("conv_small parameter count matches the hand-computed total") {
  Classifier m = build_architecture("conv_small", {1, 28, 28}, 10, 1);
  // hand count: conv stacks (out*in*4*4 + out) + bn (2*ch) + fc layers
  const int64_t conv1 = 16 * 1 * 16 + 16, bn1 = 32;
  const int64_t conv2 = 32 * 16 * 16 + 32, bn2 = 64;
  const int64_t conv3 = 64 * 32 * 16 + 64, bn3 = 128;
  const int64_t fc1 = (64 * 3 * 3) * 64 + 64;  // 28 -> 14 -> 7 -> 3 spatial
  const int64_t fc2 = 64 * 10 + 10;
  CHECK(m.param_count() == conv1 + bn1 + conv2 + bn2 + conv3 + bn3 + fc1 + fc2);
  CHECK(m.layers.size() == 13);
}

TEST_CASE("mlp layer extents are 784 -> 128x4 -> 10") {
  Classifier m = build_architecture("mlp", {784}, 10, 1);
  std::vector<std::pair<int64_t, int64_t>> linear_dims;
  for (const Layer& l : m.layers)
    if (l.kind == Layer::Kind::Linear) linear_dims.emplace_back(l.in, l.out);
  REQUIRE(linear_dims.size() == 5);
  CHECK(linear_dims[0] == std::pair<int64_t, int64_t>{784, 128});
  CHECK(linear_dims[1] == std::pair<int64_t, int64_t>{128, 128});
  CHECK(linear_dims[2] == std::pair<int64_t, int64_t>{128, 128});
  CHECK(linear_dims[3] == std::pair<int64_t, int64_t>{128, 128});
  CHECK(linear_dims[4] == std::pair<int64_t, int64_t>{128, 10});
}

TEST_CASE("two builds with the same seed produce identical parameters") {
  Classifier a = build_architecture("conv_small", {1, 28, 28}, 10, 321);
  Classifier b = build_architecture("conv_small", {1, 28, 28}, 10, 321);
  auto pa = a.named_params(), pb = b.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    for (int64_t j = 0; j < pa[i].second.numel(); ++j) CHECK(pa[i].second.at(j) == pb[i].second.at(j));

  Classifier c = build_architecture("conv_small", {1, 28, 28}, 10, 322);
  bool any_diff = false;
  auto pc = c.named_params();
  for (int64_t j = 0; j < pa[0].second.numel(); ++j) any_diff = any_diff || pa[0].second.at(j) != pc[0].second.at(j);
  CHECK(any_diff);
}

TEST_CASE("unknown architecture kinds are rejected") {
  CHECK_THROWS(build_architecture("resnet", {1, 28, 28}, 10, 1));
  CHECK_THROWS(build_architecture("conv_small", {1, -3, 28}, 10, 1));
}

TEST_CASE("forward rejects mismatched batch shapes with a diagnostic") {
  Classifier m = build_architecture("mlp", {784}, 10, 1);
  CHECK_THROWS_WITH_AS(forward(m, Tensor::zeros({2, 100})), doctest::Contains("does not match"),
                       std::invalid_argument);
}

TEST_CASE("eval-mode forward is deterministic: two calls agree bit-exactly") {
  Classifier m = build_architecture("conv_small", {1, 8, 8}, 4, 5);
  Rng rng(6);
  Tensor x = Tensor::zeros({2, 1, 8, 8});
  for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(0, 1);
  // train first so running stats are non-trivial
  m.set_mode(Mode::Train);
  forward(m, x);
  m.set_mode(Mode::Eval);
  Tensor y1 = forward(m, x);
  Tensor y2 = forward(m, x);
  for (int64_t i = 0; i < y1.numel(); ++i) CHECK(y1.at(i) == y2.at(i));
}

TEST_CASE("classifier serialization round-trips bit-exactly") {
  Classifier m = build_architecture("conv_small", {1, 12, 12}, 6, 42);
  // make running stats non-default
  Rng rng(43);
  Tensor x = Tensor::zeros({4, 1, 12, 12});
  for (int64_t i = 0; i < x.numel(); ++i) x.at(i) = rng.uniform(0, 1);
  m.set_mode(Mode::Train);
  forward(m, x);

  const std::string path = "test_model_roundtrip.bin";
  save_classifier(path, m);
  Classifier loaded = load_classifier(path);

  auto pa = m.named_params(), pb = loaded.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    for (int64_t j = 0; j < pa[i].second.numel(); ++j) CHECK(pa[i].second.at(j) == pb[i].second.at(j));
  }
  for (size_t i = 0; i < m.layers.size(); ++i) {
    CHECK(m.layers[i].running_mean == loaded.layers[i].running_mean);
    CHECK(m.layers[i].running_var == loaded.layers[i].running_var);
  }
  // loaded model computes identical logits
  m.set_mode(Mode::Eval);
  loaded.set_mode(Mode::Eval);
  Tensor y1 = forward(m, x);
  Tensor y2 = forward(loaded, x);
  for (int64_t i = 0; i < y1.numel(); ++i) CHECK(y1.at(i) == y2.at(i));
  std::remove(path.c_str());
}
