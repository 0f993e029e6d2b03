#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "uctrl/data.hpp"
#include "uctrl/eval.hpp"

using namespace uctrl;
using rate::FeatureBatch;

namespace {

// All bijections between label sets, for k <= 6.
double brute_force_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::vector<int> pred_labels = pred, truth_labels = truth;
  std::sort(pred_labels.begin(), pred_labels.end());
  pred_labels.erase(std::unique(pred_labels.begin(), pred_labels.end()), pred_labels.end());
  std::sort(truth_labels.begin(), truth_labels.end());
  truth_labels.erase(std::unique(truth_labels.begin(), truth_labels.end()), truth_labels.end());

  // pad to a square alphabet
  std::vector<int> target = truth_labels;
  int extra = static_cast<int>(pred_labels.size()) - static_cast<int>(truth_labels.size());
  for (int i = 0; i < extra; ++i) target.push_back(1000 + i);
  while (static_cast<int>(pred_labels.size()) < static_cast<int>(target.size()))
    pred_labels.push_back(2000 + static_cast<int>(pred_labels.size()));

  std::sort(target.begin(), target.end());
  double best = 0.0;
  do {
    long hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      auto it = std::find(pred_labels.begin(), pred_labels.end(), pred[i]);
      int idx = static_cast<int>(it - pred_labels.begin());
      if (target[idx] == truth[i]) ++hits;
    }
    best = std::max(best, static_cast<double>(hits) / pred.size());
  } while (std::next_permutation(target.begin(), target.end()));
  return best;
}

}  // namespace

TEST_CASE("nmi of identical nontrivial partitions is 1") {
  std::vector<int> a = {0, 0, 1, 1, 2};
  CHECK(eval::nmi(a, a) == 1.0);
}

TEST_CASE("nmi of independent partitions is 0") {
  std::vector<int> a = {0, 0, 1, 1};
  std::vector<int> b = {0, 1, 0, 1};
  CHECK(eval::nmi(a, b) == 0.0);
}

TEST_CASE("nmi is invariant to relabeling") {
  std::vector<int> a = {0, 0, 1, 1};
  std::vector<int> b = {1, 1, 0, 0};
  CHECK(eval::nmi(a, b) == 1.0);
}

TEST_CASE("nmi trivial-partition conventions") {
  std::vector<int> ones = {5, 5, 5};
  CHECK(eval::nmi(ones, ones) == 1.0);
  std::vector<int> split = {0, 1, 0};
  CHECK(eval::nmi(ones, split) == 0.0);
}

TEST_CASE("nmi is symmetric") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> a(12), b(12);
    for (auto& v : a) v = static_cast<int>(rng.uniform_below(3));
    for (auto& v : b) v = static_cast<int>(rng.uniform_below(4));
    REQUIRE(eval::nmi(a, b) == eval::nmi(b, a));
  }
}

TEST_CASE("nmi length checks") {
  std::vector<int> a = {0, 1}, b = {0};
  CHECK_THROWS_AS(eval::nmi(a, b), LengthMismatch);
}

TEST_CASE("hungarian_accuracy trivia") {
  std::vector<int> a = {0, 0, 1, 1};
  CHECK(eval::hungarian_accuracy(a, a) == 1.0);
  std::vector<int> swapped = {1, 1, 0, 0};
  CHECK(eval::hungarian_accuracy(a, swapped) == 1.0);
  std::vector<int> half = {0, 1, 0, 1};
  CHECK(eval::hungarian_accuracy(half, a) == 0.5);
  CHECK(brute_force_accuracy(half, a) == 0.5);
}

TEST_CASE("hungarian_accuracy matches brute force for k <= 6") {
  Rng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    int n = 8 + static_cast<int>(rng.uniform_below(10));
    int kp = 2 + static_cast<int>(rng.uniform_below(5));
    int kt = 2 + static_cast<int>(rng.uniform_below(5));
    std::vector<int> pred(n), truth(n);
    for (auto& v : pred) v = static_cast<int>(rng.uniform_below(kp));
    for (auto& v : truth) v = static_cast<int>(rng.uniform_below(kt));
    REQUIRE_THAT(eval::hungarian_accuracy(pred, truth),
                 Catch::Matchers::WithinAbs(brute_force_accuracy(pred, truth), 1e-12));
  }
}

TEST_CASE("hungarian_accuracy is invariant under relabeling the prediction") {
  Rng rng(3);
  std::vector<int> pred(15), truth(15);
  for (auto& v : pred) v = static_cast<int>(rng.uniform_below(4));
  for (auto& v : truth) v = static_cast<int>(rng.uniform_below(3));
  double base = eval::hungarian_accuracy(pred, truth);
  std::vector<int> relabel = {2, 0, 3, 1};
  std::vector<int> pred2(15);
  for (int i = 0; i < 15; ++i) pred2[i] = relabel[pred[i]];
  CHECK(eval::hungarian_accuracy(pred2, truth) == base);
}

// ---------------------------------------------------------------------------
// linear probe
// ---------------------------------------------------------------------------

namespace {

struct ProbeFixture {
  FeatureBatch z_train, z_test;
  std::vector<int> y_train, y_test;
};

// two distant unit prototypes plus tiny noise: linearly separable
ProbeFixture separable_fixture(Rng& rng, int per_class = 30) {
  const int d = 6;
  std::vector<std::vector<double>> protos = {{1, 0, 0, 0, 0, 0}, {0, 1, 0, 0, 0, 0}};
  auto make = [&](int n_per) {
    Matrix z(d, 2 * n_per);
    std::vector<int> y(2 * n_per);
    for (int c = 0; c < 2; ++c)
      for (int s = 0; s < n_per; ++s) {
        int j = c * n_per + s;
        std::vector<double> v = protos[c];
        for (auto& x : v) x += 0.01 * rng.next_gaussian();
        double nv = norm2(v);
        for (int i = 0; i < d; ++i) z(i, j) = v[i] / nv;
        y[j] = c;
      }
    return std::pair<Matrix, std::vector<int>>{z, y};
  };
  ProbeFixture f;
  auto [zt, yt] = make(per_class);
  auto [zs, ys] = make(per_class / 2);
  f.z_train = FeatureBatch(zt, true);
  f.y_train = yt;
  f.z_test = FeatureBatch(zs, true);
  f.y_test = ys;
  return f;
}

}  // namespace

TEST_CASE("probe reaches >= 0.99 on a separable fixture") {
  Rng rng(4);
  ProbeFixture f = separable_fixture(rng);
  eval::ProbeConfig cfg;
  cfg.steps = 500;
  cfg.adam.lr = 0.01;
  double acc = eval::linear_probe(f.z_train, f.y_train, f.z_test, f.y_test, cfg);
  CHECK(acc >= 0.99);
}

TEST_CASE("probe on shuffled labels sits at chance within 3 sigma") {
  Rng rng(5);
  ProbeFixture f = separable_fixture(rng, 40);
  Rng shuffle_rng(6);
  shuffle_rng.shuffle(f.y_train);
  shuffle_rng.shuffle(f.y_test);
  eval::ProbeConfig cfg;
  cfg.steps = 300;
  cfg.adam.lr = 0.01;
  double acc = eval::linear_probe(f.z_train, f.y_train, f.z_test, f.y_test, cfg);
  const double n = static_cast<double>(f.y_test.size());
  const double sigma = std::sqrt(0.5 * 0.5 / n);
  CHECK(std::abs(acc - 0.5) <= 3.0 * sigma + 0.05);
}

TEST_CASE("train-set probe accuracy dominates the held-out split") {
  Rng rng(7);
  ProbeFixture f = separable_fixture(rng, 20);
  eval::ProbeConfig cfg;
  cfg.steps = 300;
  cfg.adam.lr = 0.01;
  double on_train = eval::linear_probe(f.z_train, f.y_train, f.z_train, f.y_train, cfg);
  double on_test = eval::linear_probe(f.z_train, f.y_train, f.z_test, f.y_test, cfg);
  CHECK(on_train >= on_test - 1e-12);
}

TEST_CASE("probe is deterministic for a fixed seed") {
  Rng rng(8);
  ProbeFixture f = separable_fixture(rng, 10);
  eval::ProbeConfig cfg;
  cfg.steps = 100;
  auto a = eval::linear_probe_full(f.z_train, f.y_train, f.z_test, f.y_test, cfg);
  auto b = eval::linear_probe_full(f.z_train, f.y_train, f.z_test, f.y_test, cfg);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.predictions == b.predictions);
}

// ---------------------------------------------------------------------------
// heat map + margins
// ---------------------------------------------------------------------------

TEST_CASE("orthonormal columns produce the identity pattern") {
  Matrix z = Matrix::identity(4);
  std::vector<int> order = {0, 1, 2, 3};
  Matrix h = eval::cosine_heatmap(FeatureBatch(z, true), order);
  CHECK(test::max_abs_diff(h, Matrix::identity(4)) < 1e-12);
}

TEST_CASE("identical adjacent columns form a block of ones") {
  Matrix z(3, 3);
  z(0, 0) = 1.0;
  z(0, 1) = 1.0;
  z(1, 2) = 1.0;
  std::vector<int> order = {0, 1, 2};
  Matrix h = eval::cosine_heatmap(FeatureBatch(z, true), order);
  CHECK(h(0, 1) == 1.0);
  CHECK(h(1, 0) == 1.0);
  CHECK(h(0, 2) == 0.0);
}

TEST_CASE("heatmap entries live in [0,1] and the matrix is symmetric") {
  Rng rng(9);
  FeatureBatch z(test::unit_column_matrix(rng, 5, 12), true);
  std::vector<int> order(12);
  for (int i = 0; i < 12; ++i) order[i] = i;
  Matrix h = eval::cosine_heatmap(z, order);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) {
      REQUIRE(h(i, j) >= 0.0);
      REQUIRE(h(i, j) <= 1.0);
      REQUIRE(h(i, j) == h(j, i));
    }
}

TEST_CASE("heatmap rejects non-unit input") {
  Matrix z(2, 2);
  z(0, 0) = 2.0;
  z(1, 1) = 1.0;
  CHECK_THROWS_AS(eval::cosine_heatmap(FeatureBatch(z), {0, 1}), NotUnitNorm);
}

TEST_CASE("block means of the truth-sorted heatmap recompose the cosine margin") {
  Rng rng(10);
  data::Dataset ds = data::gen_subspace_mixture(rng, 9, 3, 1, 8, 0.02);
  FeatureBatch z(ds.x, true);
  eval::CosineMargin margin = eval::cosine_margin(z, ds.labels);

  std::vector<int> order = eval::order_by_labels(ds.labels);
  Matrix h = eval::cosine_heatmap(z, order);
  std::vector<int> sorted_labels;
  for (int idx : order) sorted_labels.push_back(ds.labels[idx]);

  double within = 0.0, cross = 0.0;
  long nw = 0, nc = 0;
  for (int i = 0; i < h.rows(); ++i)
    for (int j = 0; j < h.cols(); ++j) {
      if (i == j) continue;  // same convention as cosine_margin
      if (sorted_labels[i] == sorted_labels[j]) {
        within += h(i, j);
        ++nw;
      } else {
        cross += h(i, j);
        ++nc;
      }
    }
  CHECK_THAT(within / nw - cross / nc, Catch::Matchers::WithinAbs(margin.margin, 1e-12));
}

TEST_CASE("per-class breakdown counts every class") {
  Rng rng(11);
  data::Dataset ds = data::gen_subspace_mixture(rng, 6, 3, 1, 5, 0.02);
  eval::CosineMargin margin = eval::cosine_margin(FeatureBatch(ds.x, true), ds.labels);
  REQUIRE(margin.per_class.size() == 3);
  for (const auto& row : margin.per_class) CHECK(row.count == 5);
}
