#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "uctrl/network.hpp"
#include "uctrl/rate.hpp"
#include "uctrl/rng.hpp"

namespace uctrl::eval {

namespace detail {

// Maps arbitrary int labels to dense indices in ascending label order.
inline std::vector<int> densify(const std::vector<int>& labels, int& k_out) {
  std::map<int, int> ids;
  for (int v : labels) ids.emplace(v, 0);
  int next = 0;
  for (auto& [key, id] : ids) id = next++;
  k_out = next;
  std::vector<int> out(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) out[i] = ids.at(labels[i]);
  return out;
}

inline std::vector<std::vector<long>> contingency(const std::vector<int>& a,
                                                  const std::vector<int>& b, int ka, int kb) {
  std::vector<std::vector<long>> c(ka, std::vector<long>(kb, 0));
  for (size_t i = 0; i < a.size(); ++i) c[a[i]][b[i]] += 1;
  return c;
}

}  // namespace detail

// I(A;B)/sqrt(H(A) H(B)) with natural logs and 0 log 0 = 0. Zero denominator
// (both partitions trivial): 1 if identical, else 0.
inline double nmi(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
  if (labels_a.size() != labels_b.size() || labels_a.empty())
    throw LengthMismatch("nmi: label vectors must have equal nonzero length");
  int ka = 0, kb = 0;
  std::vector<int> a = detail::densify(labels_a, ka);
  std::vector<int> b = detail::densify(labels_b, kb);
  // canonical orientation so nmi(a, b) and nmi(b, a) run the same sums
  if (b < a) {
    std::swap(a, b);
    std::swap(ka, kb);
  }
  const double n = static_cast<double>(a.size());
  auto c = detail::contingency(a, b, ka, kb);

  std::vector<double> pa(ka, 0.0), pb(kb, 0.0);
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) {
      pa[i] += c[i][j];
      pb[j] += c[i][j];
    }
  for (auto& v : pa) v /= n;
  for (auto& v : pb) v /= n;

  double ha = 0.0, hb = 0.0, mi = 0.0;
  for (double p : pa)
    if (p > 0.0) ha -= p * std::log(p);
  for (double p : pb)
    if (p > 0.0) hb -= p * std::log(p);
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j)
      if (c[i][j] > 0)
        mi += c[i][j] / n * std::log(n * c[i][j] / (pa[i] * n * pb[j] * n));

  if (ha <= 0.0 && hb <= 0.0) return a == b ? 1.0 : 0.0;
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

namespace detail {

// O(n^3) assignment (potentials / shortest augmenting path), minimizing.
// Returns per-row assigned column for a square cost matrix.
inline std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = -1;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] >= 1) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace detail

// Best matched fraction over bijections between predicted and true label
// alphabets, via optimal assignment on the contingency table.
inline double hungarian_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw LengthMismatch("hungarian_accuracy: label vectors must have equal nonzero length");
  int kp = 0, kt = 0;
  std::vector<int> a = detail::densify(pred, kp);
  std::vector<int> b = detail::densify(truth, kt);
  const int n = std::max(kp, kt);
  auto c = detail::contingency(a, b, kp, kt);
  long maxc = 0;
  for (auto& row : c)
    for (long x : row) maxc = std::max(maxc, x);
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, static_cast<double>(maxc)));
  for (int i = 0; i < kp; ++i)
    for (int j = 0; j < kt; ++j) cost[i][j] = static_cast<double>(maxc - c[i][j]);
  std::vector<int> match = detail::solve_assignment(cost);
  long hits = 0;
  for (int i = 0; i < kp; ++i) {
    int j = match[i];
    if (j >= 0 && j < kt) hits += c[i][j];
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Linear probe: one linear layer, softmax cross-entropy on frozen features,
// full-batch Adam, fixed step count. Deterministic for a fixed seed.
// ---------------------------------------------------------------------------

struct ProbeConfig {
  int steps = 1000;
  model::AdamParams adam;
  uint64_t seed = 1;
};

struct ProbeResult {
  double accuracy = 0.0;
  std::vector<int> predictions;  // per test sample
};

inline ProbeResult linear_probe_full(const rate::FeatureBatch& z_train,
                                     const std::vector<int>& y_train,
                                     const rate::FeatureBatch& z_test,
                                     const std::vector<int>& y_test, const ProbeConfig& cfg) {
  if (static_cast<int>(y_train.size()) != z_train.count() ||
      static_cast<int>(y_test.size()) != z_test.count())
    throw LengthMismatch("linear_probe: labels do not match feature batches");
  if (z_train.dim() != z_test.dim())
    throw DimensionMismatch("linear_probe: train/test feature dims differ");
  int k = 0;
  for (int v : y_train) k = std::max(k, v + 1);
  for (int v : y_test) k = std::max(k, v + 1);

  // zero init: argmax only needs the logit ranking, and a short Adam run
  // from zero is aligned with the loss from the first step
  model::Network clf;
  {
    model::Layer l;
    l.w = Matrix(k, z_train.dim());
    l.b.assign(k, 0.0);
    l.act = model::Activation::linear;
    clf.layers.push_back(std::move(l));
  }
  model::AdamState opt = model::make_adam_state(clf);
  const int n = z_train.count();

  for (int step = 0; step < cfg.steps; ++step) {
    auto [logits, tape] = model::forward(clf, z_train.z);
    // softmax cross-entropy gradient (p - onehot)/N, columns are samples
    Matrix g(logits.rows(), logits.cols());
    for (int j = 0; j < n; ++j) {
      double mx = logits(0, j);
      for (int i = 1; i < k; ++i) mx = std::max(mx, logits(i, j));
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += std::exp(logits(i, j) - mx);
      for (int i = 0; i < k; ++i) {
        double p = std::exp(logits(i, j) - mx) / s;
        g(i, j) = (p - (y_train[j] == i ? 1.0 : 0.0)) / n;
      }
    }
    auto [grads, g_in] = model::backward(clf, tape, g);
    (void)g_in;
    model::adam_step(clf, grads, opt, cfg.adam, /*maximize=*/false);
  }

  auto [logits, tape] = model::forward(clf, z_test.z);
  (void)tape;
  ProbeResult out;
  out.predictions.resize(z_test.count());
  long hits = 0;
  for (int j = 0; j < z_test.count(); ++j) {
    int best = 0;
    for (int i = 1; i < k; ++i)
      if (logits(i, j) > logits(best, j)) best = i;
    out.predictions[j] = best;
    if (best == y_test[j]) ++hits;
  }
  out.accuracy = static_cast<double>(hits) / z_test.count();
  return out;
}

inline double linear_probe(const rate::FeatureBatch& z_train, const std::vector<int>& y_train,
                           const rate::FeatureBatch& z_test, const std::vector<int>& y_test,
                           const ProbeConfig& cfg) {
  return linear_probe_full(z_train, y_train, z_test, y_test, cfg).accuracy;
}

// ---------------------------------------------------------------------------
// |Z^T Z| diagnostics
// ---------------------------------------------------------------------------

// |Z^T Z| with rows/cols sorted by the given ordering. Requires unit-norm
// features so every entry is a |cosine| in [0, 1].
inline Matrix cosine_heatmap(const rate::FeatureBatch& z, const std::vector<int>& order) {
  const int n = z.count();
  if (static_cast<int>(order.size()) != n)
    throw LengthMismatch("cosine_heatmap: ordering length != N");
  for (int j = 0; j < n; ++j)
    if (std::abs(z.z.col_norm(j) - 1.0) > 1e-8)
      throw NotUnitNorm("cosine_heatmap: column " + std::to_string(j) + " not unit norm");
  Matrix zs = select_cols(z.z, order);
  Matrix g = gram_tn(zs);
  for (size_t i = 0; i < g.size(); ++i)
    g.data()[i] = std::min(1.0, std::abs(g.data()[i]));
  return g;
}

inline std::vector<int> order_by_labels(const std::vector<int>& labels) {
  std::vector<int> order(labels.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return labels[a] < labels[b]; });
  return order;
}

struct PerClassRow {
  int label = 0;
  int count = 0;
  double within_cos = 0.0;
  double cross_cos = 0.0;
  double probe_recall = 0.0;  // filled by report assembly when available
};

struct CosineMargin {
  double within = 0.0;  // mean |cos| over ordered within-class pairs, i != j
  double cross = 0.0;   // mean |cos| over cross-class pairs
  double margin = 0.0;
  std::vector<PerClassRow> per_class;
};

inline CosineMargin cosine_margin(const rate::FeatureBatch& z, const std::vector<int>& labels) {
  const int n = z.count();
  if (static_cast<int>(labels.size()) != n)
    throw LengthMismatch("cosine_margin: labels length != N");
  int k = 0;
  std::vector<int> dense = detail::densify(labels, k);
  Matrix g = gram_tn(z.z);

  double within_sum = 0.0, cross_sum = 0.0;
  long within_cnt = 0, cross_cnt = 0;
  std::vector<double> cls_within(k, 0.0), cls_cross(k, 0.0);
  std::vector<long> cls_within_cnt(k, 0), cls_cross_cnt(k, 0), cls_count(k, 0);
  for (int i = 0; i < n; ++i) ++cls_count[dense[i]];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double a = std::abs(g(i, j));
      if (dense[i] == dense[j]) {
        within_sum += a;
        ++within_cnt;
        cls_within[dense[i]] += a;
        ++cls_within_cnt[dense[i]];
      } else {
        cross_sum += a;
        ++cross_cnt;
        cls_cross[dense[i]] += a;
        ++cls_cross_cnt[dense[i]];
      }
    }

  CosineMargin out;
  out.within = within_cnt ? within_sum / within_cnt : 0.0;
  out.cross = cross_cnt ? cross_sum / cross_cnt : 0.0;
  out.margin = out.within - out.cross;
  std::map<int, int> back;
  for (size_t i = 0; i < labels.size(); ++i) back[dense[i]] = labels[i];
  for (int c = 0; c < k; ++c) {
    PerClassRow row;
    row.label = back[c];
    row.count = static_cast<int>(cls_count[c]);
    row.within_cos = cls_within_cnt[c] ? cls_within[c] / cls_within_cnt[c] : 0.0;
    row.cross_cos = cls_cross_cnt[c] ? cls_cross[c] / cls_cross_cnt[c] : 0.0;
    out.per_class.push_back(row);
  }
  return out;
}

struct EvalReport {
  double nmi = 0.0;
  double cluster_accuracy = 0.0;
  double probe_accuracy = 0.0;
  double cosine_margin = 0.0;
  bool has_cluster_metrics = false;
  std::vector<PerClassRow> per_class;
};

}  // namespace uctrl::eval
