#pragma once

#include <string>
#include <utility>
#include <vector>

#include "uctrl/data.hpp"
#include "uctrl/network.hpp"
#include "uctrl/rate.hpp"

namespace uctrl::cluster {

struct ClusterResult {
  rate::Membership membership;
  std::vector<int> hard_labels;  // argmax per row, ties to the lowest index
  int k = 0;
  std::vector<double> objective_trace;  // per-step batch objective
  bool degenerate = false;              // some final cluster mass < N/(10k)
};

inline std::vector<int> hard_assignment(const rate::Membership& m) {
  std::vector<int> out(m.samples());
  for (int i = 0; i < m.samples(); ++i) {
    int best = 0;
    for (int j = 1; j < m.clusters(); ++j)
      if (m.p(i, j) > m.p(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

// Pure inference: membership rows = softmax(head(z_i)).
inline rate::Membership assign(const model::Network& head, const rate::FeatureBatch& z) {
  if (head.input_dim() != z.dim())
    throw DimensionMismatch("assign: head input dim != feature dim");
  auto [p_cols, tape] = model::forward(head, z.z);  // k x N
  (void)tape;
  return rate::Membership(transpose(p_cols));
}

// Head d -> d -> k, hidden ReLU, softmax output. The final layer is scaled
// down so the initial membership starts near uniform; exactly uniform is a
// stationary point of the objective and would never move.
inline model::Network make_cluster_head(int feature_dim, int k, Rng& rng) {
  model::Network head = model::make_mlp(
      {feature_dim, feature_dim, k},
      {model::Activation::relu, model::Activation::softmax}, rng);
  scale_in_place(head.layers.back().w, 0.1);
  return head;
}

struct ClusterFitConfig {
  int steps = 2000;
  int batch_size = 0;  // 0 = full batch
  model::AdamParams adam;
  rate::RateParams rate_params;
  uint64_t seed = 1;
};

// Ascends dR(Z | Pi(xi)) over the head parameters with Z frozen; returns the
// result at the iterate with the best recorded objective.
inline ClusterResult fit_cluster_head(const rate::FeatureBatch& z, int k, model::Network& head,
                                      const ClusterFitConfig& cfg) {
  if (k < 1) throw InvalidConfig("fit_cluster_head: k must be >= 1");
  if (head.input_dim() != z.dim() || head.output_dim() != k)
    throw DimensionMismatch("fit_cluster_head: head dims do not match (d -> k)");
  if (head.layers.back().act != model::Activation::softmax)
    throw InvalidConfig("fit_cluster_head: head must end in softmax");
  check_finite(z.z, "fit_cluster_head");

  const int n = z.count();
  const int batch = (cfg.batch_size <= 0 || cfg.batch_size > n) ? n : cfg.batch_size;

  model::AdamState opt = model::make_adam_state(head);
  model::Network best_head = head;
  double best_objective = -1e300;

  ClusterResult result;
  result.k = k;
  result.objective_trace.reserve(cfg.steps);

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<int> idx =
        data::batch_indices_for_iteration(n, batch, mix_seed(cfg.seed, "cluster"), step);
    Matrix zb = select_cols(z.z, idx);

    auto [p_cols, tape] = model::forward(head, zb);  // k x B
    rate::Membership pi(transpose(p_cols));
    rate::FeatureBatch fb(zb, z.unit);
    double objective = rate::rate_reduction(fb, pi, cfg.rate_params).total;
    result.objective_trace.push_back(objective);
    if (objective > best_objective) {
      best_objective = objective;
      best_head = head;
    }

    if (k == 1) continue;  // objective identically 0; nothing to ascend

    Matrix g_p = rate::rate_reduction_grad_membership(fb, pi, cfg.rate_params);  // B x k
    auto [grads, g_in] = model::backward(head, tape, transpose(g_p));
    (void)g_in;
    model::adam_step(head, grads, opt, cfg.adam, /*maximize=*/true);
  }

  // Final evaluation counts toward best-iterate selection too.
  {
    rate::Membership pi = assign(head, z);
    double objective = rate::rate_reduction(z, pi, cfg.rate_params).total;
    if (objective > best_objective) {
      best_objective = objective;
      best_head = head;
    }
  }

  head = best_head;
  result.membership = assign(head, z);
  result.hard_labels = hard_assignment(result.membership);

  std::vector<double> mass(k, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) mass[j] += result.membership.p(i, j);
  for (int j = 0; j < k; ++j)
    if (mass[j] < static_cast<double>(n) / (10.0 * k)) result.degenerate = true;
  if (k == 1) result.degenerate = true;  // trivial single-cluster result

  return result;
}

}  // namespace uctrl::cluster
