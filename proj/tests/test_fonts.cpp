#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "oracles.hpp"
#include "robustlab/fonts.hpp"
#include "robustlab/ops.hpp"
#include "robustlab/rng.hpp"

using namespace robustlab;
using namespace robustlab::fonts;

TEST_CASE("compose_affine: identity pose gives the identity matrix") {
  auto m = compose_affine({});
  CHECK(m[0] == 1.0);
  CHECK(m[1] == 0.0);
  CHECK(m[2] == 0.0);
  CHECK(m[3] == 0.0);
  CHECK(m[4] == 1.0);
  CHECK(m[5] == 0.0);
}

TEST_CASE("compose_affine: pure translation") {
  LatentPose p;
  p.t1 = 0.13;
  p.t2 = -0.07;
  auto m = compose_affine(p);
  CHECK(m[0] == 1.0);
  CHECK(m[2] == doctest::Approx(0.13));
  CHECK(m[4] == 1.0);
  CHECK(m[5] == doctest::Approx(-0.07));
}

TEST_CASE("compose_affine: r=pi/2 gives [[0,-1,0],[1,0,0]] by symbolic substitution") {
  LatentPose p;
  p.r = std::numbers::pi / 2;
  auto m = compose_affine(p);
  CHECK(std::abs(m[0]) < 1e-15);
  CHECK(m[1] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(m[2] == 0.0);
  CHECK(m[3] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(m[4]) < 1e-15);
}

TEST_CASE("compose_affine rejects non-finite poses") {
  LatentPose p;
  p.s = std::numeric_limits<double>::infinity();
  CHECK_THROWS(compose_affine(p));
}

TEST_CASE("compose_affine is continuous: O(h) entry change under perturbation") {
  LatentPose p{0.1, -0.1, 0.2, -0.3, 0.9, 0.5};
  const auto base = compose_affine(p);
  const double h = 1e-6;
  for (int comp = 0; comp < 6; ++comp) {
    auto a = p.as_array();
    a[static_cast<size_t>(comp)] += h;
    const auto moved = compose_affine(LatentPose::from_array(a));
    for (int i = 0; i < 6; ++i) CHECK(std::abs(moved[static_cast<size_t>(i)] - base[static_cast<size_t>(i)]) < 10 * h);
  }
}

TEST_CASE("builtin prototypes: >= 10 styles per class, values in [0,1], nonempty ink") {
  auto protos = builtin_prototypes(28);
  std::array<int, 10> counts{};
  for (const auto& g : protos) {
    counts[static_cast<size_t>(g.class_id)]++;
    double mass = 0;
    for (int64_t i = 0; i < g.bitmap.numel(); ++i) {
      CHECK(g.bitmap.at(i) >= 0.0);
      CHECK(g.bitmap.at(i) <= 1.0);
      mass += g.bitmap.at(i);
    }
    CHECK(mass > 10.0);  // visible strokes
  }
  for (int c = 0; c < 10; ++c) CHECK(counts[static_cast<size_t>(c)] >= 10);
}

TEST_CASE("true_decoder: identity pose returns the prototype bitmap unchanged") {
  auto protos = builtin_prototypes(28);
  Tensor img = true_decoder(protos[5], {});
  for (int64_t i = 0; i < img.numel(); ++i) CHECK(img.at(i) == protos[5].bitmap.at(i));
}

TEST_CASE("true_decoder is deterministic: two calls bit-identical") {
  auto protos = builtin_prototypes(28);
  LatentPose p{0.1, -0.05, 0.2, -0.1, 0.9, 0.7};
  Tensor a = true_decoder(protos[17], p);
  Tensor b = true_decoder(protos[17], p);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("gradient of pixel sum wrt rotation matches finite differences") {
  auto protos = builtin_prototypes(28);
  Tensor pose = Tensor::from({1, 6}, {0.05, -0.02, 0.1, -0.05, 0.95, 0.4}, true);
  backward(sum(decode_pose_batch({&protos[3]}, pose)));
  auto loss_fn = [&]() {
    return static_cast<double>(sum(decode_pose_batch({&protos[3]}, pose.detached_copy())).item());
  };
  const auto fd = oracles::finite_diff(pose, loss_fn);
  // rotation is component 5
  CHECK(oracles::rel_err(static_cast<double>(pose.grad()[5]), fd[5]) < 1e-3);
  CHECK(oracles::max_grad_rel_err(pose, fd) < 1e-3);
}

TEST_CASE("generate: balance, determinism, stored poses re-decode bit-exactly") {
  auto protos = builtin_prototypes(28);
  SyntheticDataset ds = generate(protos, 10, 1234);
  REQUIRE(ds.size() == 100);
  std::array<int, 10> counts{};
  for (int64_t l : ds.labels) counts[static_cast<size_t>(l)]++;
  for (int c = 0; c < 10; ++c) CHECK(counts[static_cast<size_t>(c)] == 10);

  SyntheticDataset ds2 = generate(protos, 10, 1234);
  for (int64_t i = 0; i < ds.images.numel(); ++i) CHECK(ds.images.at(i) == ds2.images.at(i));

  // every stored example equals true_decoder(prototype, pose) exactly
  for (int64_t i = 0; i < ds.size(); i += 7) {
    Tensor re = true_decoder(protos[static_cast<size_t>(ds.prototype_indices[static_cast<size_t>(i)])],
                             ds.poses[static_cast<size_t>(i)]);
    Tensor stored = ds.image(i);
    for (int64_t k = 0; k < re.numel(); ++k) CHECK(re.at(k) == stored.at(k));
  }

  // all pixels in [0,1]
  for (int64_t i = 0; i < ds.images.numel(); ++i) {
    CHECK(ds.images.at(i) >= 0.0);
    CHECK(ds.images.at(i) <= 1.0);
  }

  CHECK_THROWS(generate({}, 10, 1));
}

TEST_CASE("generate: pose marginals are in range and roughly uniform per decile") {
  auto protos = builtin_prototypes(12);  // small bitmaps keep this cheap
  SyntheticDataset ds = generate(protos, 1000, 77);
  PoseRanges ranges;
  const auto bounds = ranges.bounds();
  for (int comp = 0; comp < 6; ++comp) {
    const auto [lo, hi] = bounds[static_cast<size_t>(comp)];
    std::array<int, 10> decile{};
    for (const LatentPose& p : ds.poses) {
      const double v = p.as_array()[static_cast<size_t>(comp)];
      REQUIRE(v >= lo);
      REQUIRE(v <= hi);
      int b = static_cast<int>((v - lo) / (hi - lo) * 10.0);
      if (b == 10) b = 9;
      decile[static_cast<size_t>(b)]++;
    }
    for (int b = 0; b < 10; ++b) {
      const double frac = decile[static_cast<size_t>(b)] / 10000.0;
      CHECK(frac > 0.08);
      CHECK(frac < 0.12);
    }
  }
}

TEST_CASE("dataset container round-trips: re-decoding stored poses is bit-exact") {
  auto protos = builtin_prototypes(28);
  SyntheticDataset ds = generate(protos, 3, 555);
  const std::string path = "test_dataset_roundtrip.bin";
  save_dataset(path, ds);
  SyntheticDataset back = load_dataset(path);
  REQUIRE(back.size() == ds.size());
  CHECK(back.seed == ds.seed);
  for (int64_t i = 0; i < ds.images.numel(); ++i) CHECK(back.images.at(i) == ds.images.at(i));
  for (int64_t i = 0; i < ds.size(); ++i) {
    CHECK(back.labels[static_cast<size_t>(i)] == ds.labels[static_cast<size_t>(i)]);
    Tensor re = true_decoder(protos[static_cast<size_t>(back.prototype_indices[static_cast<size_t>(i)])],
                             back.poses[static_cast<size_t>(i)]);
    for (int64_t k = 0; k < re.numel(); ++k) CHECK(re.at(k) == back.image(i).at(k));
  }
  std::remove(path.c_str());
}

TEST_CASE("prototype import reads 8-bit PGM files mapped to [0,1]") {
  namespace fs = std::filesystem;
  const std::string root = "test_proto_import";
  fs::create_directories(root + "/0");
  fs::create_directories(root + "/1");
  {
    std::ofstream os(root + "/0/a.pgm", std::ios::binary);
    os << "P5\n4 4\n255\n";
    for (int i = 0; i < 16; ++i) os.put(static_cast<char>(i * 17));
  }
  {
    std::ofstream os(root + "/1/b.pgm");
    os << "P2\n# comment\n2 2\n255\n0 128 255 64\n";
  }
  auto protos = import_prototypes(root);
  REQUIRE(protos.size() == 2);
  CHECK(protos[0].class_id == 0);
  CHECK(protos[0].bitmap.shape() == Shape{1, 4, 4});
  CHECK(protos[0].bitmap.at(1) == doctest::Approx(17.0 / 255.0));
  CHECK(protos[1].class_id == 1);
  CHECK(protos[1].bitmap.at(1) == doctest::Approx(128.0 / 255.0));
  CHECK(protos[1].bitmap.at(2) == doctest::Approx(1.0));
  fs::remove_all(root);
}
