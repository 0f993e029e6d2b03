#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "uctrl/data.hpp"
#include "uctrl/io.hpp"
#include "uctrl/linalg.hpp"

using namespace uctrl;
using data::AugKind;
using data::AugmentationSpec;
using data::Dataset;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("noise-free one-dimensional classes are collinear up to sign") {
  Rng rng(1);
  Dataset ds = data::gen_subspace_mixture(rng, 8, 2, 1, 10, 0.0);
  REQUIRE(ds.count() == 20);
  for (int cls = 0; cls < 2; ++cls) {
    int first = cls * 10;
    for (int j = first + 1; j < first + 10; ++j) {
      double ip = 0.0;
      for (int i = 0; i < 8; ++i) ip += ds.x(i, first) * ds.x(i, j);
      CHECK_THAT(std::abs(ip), Catch::Matchers::WithinAbs(1.0, 1e-10));
    }
  }
}

TEST_CASE("cross-class Gram blocks are small for small noise") {
  Rng rng(2);
  const double sigma = 0.01;
  Dataset ds = data::gen_subspace_mixture(rng, 16, 3, 2, 30, sigma);
  Matrix g = gram_tn(ds.x);
  double max_cross = 0.0;
  for (int i = 0; i < ds.count(); ++i)
    for (int j = 0; j < ds.count(); ++j)
      if (ds.labels[i] != ds.labels[j]) max_cross = std::max(max_cross, std::abs(g(i, j)));
  // bases are exactly orthogonal; cross terms come only from the noise
  CHECK(max_cross < 60.0 * sigma);
}

TEST_CASE("invalid generator configs are rejected") {
  Rng rng(3);
  CHECK_THROWS_AS(data::gen_subspace_mixture(rng, 8, 2, 1, 0, 0.0), InvalidConfig);
  CHECK_THROWS_AS(data::gen_subspace_mixture(rng, 4, 3, 2, 5, 0.0), InvalidConfig);
  CHECK_THROWS_AS(data::gen_subspace_mixture(rng, 8, 2, 1, 5, -1.0), InvalidConfig);
}

TEST_CASE("noise-free datasets have rank <= k * per_class_dim") {
  Rng rng(4);
  Dataset ds = data::gen_subspace_mixture(rng, 10, 3, 2, 20, 0.0);
  SymEig eig = sym_eig(gram_nt(ds.x));
  int rank = 0;
  for (double v : eig.values)
    if (v > 1e-8) ++rank;
  CHECK(rank <= 6);
}

TEST_CASE("additive noise with sigma 0 is the identity") {
  Rng rng(5);
  AugmentationSpec spec;
  spec.kind = AugKind::additive_noise;
  spec.noise_sigma = 0.0;
  spec.renormalize = false;
  std::vector<double> x = {0.1, -0.7, 0.3};
  CHECK(data::augment(rng, x, spec) == x);
}

TEST_CASE("forced flip reverses a width-4 strip") {
  Rng rng(6);
  AugmentationSpec spec;
  spec.kind = AugKind::pixel_crop_flip;
  spec.image_c = 1;
  spec.image_h = 1;
  spec.image_w = 4;
  spec.max_shift = 0;
  spec.flip_prob = 1.0;
  spec.brightness = 0.0;
  spec.renormalize = false;
  std::vector<double> x = {0.1, 0.2, 0.3, 0.4};
  std::vector<double> want = {0.4, 0.3, 0.2, 0.1};
  CHECK(data::augment(rng, x, spec) == want);
}

TEST_CASE("subspace_jitter stays near the class subspace") {
  Rng rng(7);
  const int dim = 12;
  Dataset ds = data::gen_subspace_mixture(rng, dim, 1, 2, 1, 0.0);
  std::vector<double> x = ds.x.col(0);

  AugmentationSpec spec;
  spec.kind = AugKind::subspace_jitter;
  spec.noise_sigma = 0.05;
  spec.renormalize = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y = data::augment(rng, x, spec);
    // distance to the line through x
    double ip = 0.0;
    for (int i = 0; i < dim; ++i) ip += x[i] * y[i];
    double resid = 0.0;
    for (int i = 0; i < dim; ++i) {
      double r = y[i] - ip * x[i];
      resid += r * r;
    }
    CHECK(std::sqrt(resid) < 8.0 * spec.noise_sigma * std::sqrt(static_cast<double>(dim)));
  }
}

TEST_CASE("augment preserves unit norm and finiteness when asked") {
  Rng rng(8);
  AugmentationSpec spec;  // subspace_jitter defaults, renormalize on
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(6);
    for (auto& v : x) v = rng.next_gaussian();
    double n = norm2(x);
    for (auto& v : x) v /= n;
    std::vector<double> y = data::augment(rng, x, spec);
    CHECK_THAT(norm2(y), Catch::Matchers::WithinAbs(1.0, 1e-8));
  }
}

TEST_CASE("rotation_in_class_plane requires a basis and preserves coefficients' norm") {
  Rng rng(9);
  AugmentationSpec spec;
  spec.kind = AugKind::rotation_in_class_plane;
  spec.noise_sigma = 0.0;
  spec.renormalize = false;
  std::vector<double> x = {1.0, 0.0, 0.0};
  CHECK_THROWS_AS(data::augment(rng, x, spec), InvalidConfig);

  Matrix basis = Matrix::identity(3);  // full basis, rotate within e-planes
  std::vector<double> y = data::augment(rng, x, spec, &basis);
  CHECK_THAT(norm2(y), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary format
// ---------------------------------------------------------------------------

TEST_CASE("cifar reader recovers a crafted two-record file bit-exactly") {
  std::string path = temp_path("uctrl_cifar_fixture.bin");
  {
    std::ofstream f(path, std::ios::binary);
    // record 0: label 3, pixels 0,1,2,...; record 1: label 9, pixels 255,254,...
    f.put(3);
    for (int i = 0; i < 3072; ++i) f.put(static_cast<char>(i % 256));
    f.put(9);
    for (int i = 0; i < 3072; ++i) f.put(static_cast<char>(255 - i % 256));
  }
  Dataset ds = data::read_cifar10_batch(path);
  REQUIRE(ds.count() == 2);
  REQUIRE(ds.dim() == 3072);
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 9);
  for (int i = 0; i < 3072; ++i) {
    CHECK(ds.x(i, 0) == (i % 256) / 127.5 - 1.0);
    CHECK(ds.x(i, 1) == (255 - i % 256) / 127.5 - 1.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("cifar pixel endpoints map to -1 and +1") {
  CHECK(0 / 127.5 - 1.0 == -1.0);
  CHECK(255 / 127.5 - 1.0 == 1.0);
}

TEST_CASE("truncated cifar file raises BadRecordSize") {
  std::string path = temp_path("uctrl_cifar_truncated.bin");
  {
    std::ofstream f(path, std::ios::binary);
    for (int i = 0; i < 3072; ++i) f.put(static_cast<char>(i % 256));  // 3072 < 3073
  }
  CHECK_THROWS_AS(data::read_cifar10_batch(path), BadRecordSize);
  std::remove(path.c_str());
}

TEST_CASE("cifar writer round-trips bit-exactly") {
  Rng rng(10);
  std::string path = temp_path("uctrl_cifar_roundtrip.bin");
  Dataset ds;
  ds.x = Matrix(3072, 3);
  ds.labels = {1, 5, 7};
  ds.k_true = 10;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3072; ++i)
      ds.x(i, j) = static_cast<int>(rng.uniform_below(256)) / 127.5 - 1.0;
  data::write_cifar10_batch(ds, path);
  Dataset back = data::read_cifar10_batch(path);
  CHECK(back.labels == ds.labels);
  CHECK(test::max_abs_diff(back.x, ds.x) == 0.0);
  std::remove(path.c_str());
}

// ---------------------------------------------------------------------------
// UCDS container
// ---------------------------------------------------------------------------

TEST_CASE("ucds round-trip is byte-identical") {
  Rng rng(11);
  std::string path = temp_path("uctrl_roundtrip.ucds");
  Dataset ds = data::gen_subspace_mixture(rng, 6, 2, 1, 4, 0.03);
  data::write_ucds(ds, path);
  Dataset back = data::read_ucds(path);
  CHECK(back.labels == ds.labels);
  CHECK(back.k_true == ds.k_true);
  CHECK(test::max_abs_diff(back.x, ds.x) == 0.0);

  std::string path2 = temp_path("uctrl_roundtrip2.ucds");
  data::write_ucds(back, path2);
  CHECK(io::read_text(path) == io::read_text(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("ucds stores absent labels as 0xFFFF") {
  std::string path = temp_path("uctrl_unlabeled.ucds");
  Dataset ds;
  ds.x = Matrix(2, 3, 0.25);
  data::write_ucds(ds, path);
  Dataset back = data::read_ucds(path);
  CHECK_FALSE(back.labeled());
  std::remove(path.c_str());
}

// ---------------------------------------------------------------------------
// batch schedule
// ---------------------------------------------------------------------------

TEST_CASE("batch covering the whole set is a permutation") {
  std::vector<int> idx = data::batch_indices_for_iteration(10, 10, 42, 0);
  std::set<int> seen(idx.begin(), idx.end());
  CHECK(seen.size() == 10);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 9);
}

TEST_CASE("batch schedule is reproducible") {
  for (uint64_t it = 0; it < 12; ++it) {
    auto a = data::batch_indices_for_iteration(17, 5, 7, it);
    auto b = data::batch_indices_for_iteration(17, 5, 7, it);
    REQUIRE(a == b);
  }
}

TEST_CASE("every index appears exactly once per epoch") {
  const int n = 17, batch = 5;
  const int bpe = data::batches_per_epoch(n, batch);
  for (uint64_t epoch = 0; epoch < 3; ++epoch) {
    std::multiset<int> seen;
    for (int s = 0; s < bpe; ++s) {
      auto idx = data::batch_indices_for_iteration(n, batch, 9, epoch * bpe + s);
      seen.insert(idx.begin(), idx.end());
    }
    REQUIRE(seen.size() == static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) REQUIRE(seen.count(i) == 1);
  }
}

TEST_CASE("index frequencies are uniform over many epochs") {
  const int n = 12, batch = 5, epochs = 300;
  const int bpe = data::batches_per_epoch(n, batch);
  std::vector<int> freq(n, 0);
  // count only the first batch of each epoch: 5 of 12 slots, uniform at random
  for (int e = 0; e < epochs; ++e) {
    auto idx = data::batch_indices_for_iteration(n, batch, 33, static_cast<uint64_t>(e) * bpe);
    for (int i : idx) ++freq[i];
  }
  const double expect = epochs * static_cast<double>(batch) / n;
  const double sigma = std::sqrt(epochs * (batch / double(n)) * (1.0 - batch / double(n)));
  for (int i = 0; i < n; ++i) CHECK(std::abs(freq[i] - expect) <= 3.5 * sigma);
}

TEST_CASE("invalid batch sizes are rejected") {
  CHECK_THROWS_AS(data::batch_indices_for_iteration(5, 6, 1, 0), InvalidConfig);
  CHECK_THROWS_AS(data::batch_indices_for_iteration(5, 0, 1, 0), InvalidConfig);
}

TEST_CASE("BatchIterator pairs each batch with one augmentation per sample") {
  Rng rng(12);
  Dataset ds = data::gen_subspace_mixture(rng, 6, 2, 1, 8, 0.01);
  AugmentationSpec spec;
  data::BatchIterator it(data::TrainingView(ds), spec, 5, 4);
  data::Batch b = it.at(0);
  CHECK(b.indices.size() == 4);
  CHECK(b.x.cols() == 4);
  CHECK(b.x_aug.cols() == 4);
  data::Batch b2 = it.at(0);
  CHECK(test::max_abs_diff(b.x_aug, b2.x_aug) == 0.0);  // same iteration, same stream
}

TEST_CASE("split_per_class keeps class balance and order") {
  Rng rng(13);
  Dataset ds = data::gen_subspace_mixture(rng, 6, 3, 1, 10, 0.01);
  auto [train, test] = data::split_per_class(ds, 7);
  CHECK(train.count() == 21);
  CHECK(test.count() == 9);
  std::vector<int> counts(3, 0);
  for (int lab : train.labels) ++counts[lab];
  for (int c : counts) CHECK(c == 7);
}
