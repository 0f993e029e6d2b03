#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uctrl/cluster.hpp"
#include "uctrl/linalg.hpp"
#include "uctrl/network.hpp"
#include "uctrl/rate.hpp"
#include "uctrl/rng.hpp"

namespace uctrl::gen {

// Per-cluster PCA of member features: mean, principal directions (columns,
// orthonormal), singular values descending.
struct ClusterModel {
  int cluster = -1;
  bool present = false;
  std::vector<double> mean;
  Matrix directions;                  // d x r
  std::vector<double> singular_values;  // r, descending, >= 0
  int member_count = 0;

  int rank() const { return directions.cols(); }
};

inline std::vector<ClusterModel> fit_cluster_models(const rate::FeatureBatch& z,
                                                    const std::vector<int>& hard_labels, int k,
                                                    int r) {
  if (r < 1) throw InvalidConfig("fit_cluster_models: r must be >= 1");
  if (static_cast<int>(hard_labels.size()) != z.count())
    throw DimensionMismatch("fit_cluster_models: labels do not match batch");
  const int d = z.dim();

  std::vector<ClusterModel> models(k);
  for (int j = 0; j < k; ++j) {
    ClusterModel& m = models[j];
    m.cluster = j;
    std::vector<int> members;
    for (int i = 0; i < z.count(); ++i)
      if (hard_labels[i] == j) members.push_back(i);
    m.member_count = static_cast<int>(members.size());
    if (members.empty()) continue;  // absent model, reported by caller
    m.present = true;

    m.mean.assign(d, 0.0);
    for (int i : members)
      for (int row = 0; row < d; ++row) m.mean[row] += z.z(row, i);
    for (auto& v : m.mean) v /= m.member_count;

    // centered second-moment matrix
    Matrix cov(d, d);
    for (int i : members) {
      std::vector<double> c(d);
      for (int row = 0; row < d; ++row) c[row] = z.z(row, i) - m.mean[row];
      for (int row = 0; row < d; ++row)
        for (int col = 0; col < d; ++col) cov(row, col) += c[row] * c[col];
    }
    scale_in_place(cov, 1.0 / m.member_count);

    SymEig eig = sym_eig(cov);  // ascending
    int keep = std::min({r, d, m.member_count});
    m.directions = Matrix(d, keep);
    m.singular_values.resize(keep);
    for (int c = 0; c < keep; ++c) {
      int src = d - 1 - c;
      m.singular_values[c] = std::sqrt(std::max(0.0, eig.values[src]));
      for (int row = 0; row < d; ++row) m.directions(row, c) = eig.vectors(row, src);
    }
  }
  return models;
}

inline std::vector<ClusterModel> fit_cluster_models(const rate::FeatureBatch& z,
                                                    const cluster::ClusterResult& result,
                                                    int r) {
  return fit_cluster_models(z, result.hard_labels, result.k, r);
}

// z(t) = normalize(mu + t * s_c * u_c + noise_scale * nu), where t sweeps m
// evenly spaced values in [-t_span, t_span] and nu is a Gaussian draw shaped
// by the residual spectrum (one draw per call, shared across the sweep).
inline rate::FeatureBatch sample_features(Rng& rng, const ClusterModel& cm, int component,
                                          int count, double noise_scale, double t_span = 2.0) {
  if (!cm.present) throw InvalidConfig("sample_features: empty cluster model");
  if (component < 0 || component >= cm.rank())
    throw IndexOutOfRange("sample_features: component " + std::to_string(component) +
                          " out of range (rank " + std::to_string(cm.rank()) + ")");
  if (count < 1) throw InvalidConfig("sample_features: count must be >= 1");
  const int d = static_cast<int>(cm.mean.size());

  std::vector<double> noise(d, 0.0);
  if (noise_scale > 0.0) {
    for (int c = 0; c < cm.rank(); ++c) {
      if (c == component) continue;
      double g = rng.next_gaussian() * cm.singular_values[c];
      for (int row = 0; row < d; ++row) noise[row] += g * cm.directions(row, c);
    }
  }

  Matrix out(d, count);
  for (int s = 0; s < count; ++s) {
    double t = (count == 1) ? 0.0 : -t_span + 2.0 * t_span * s / (count - 1);
    std::vector<double> zr(d);
    double coef = t * cm.singular_values[component];
    for (int row = 0; row < d; ++row)
      zr[row] = cm.mean[row] + coef * cm.directions(row, component) +
                noise_scale * noise[row];
    double nv = norm2(zr);
    if (nv < 1e-12) throw ZeroVector("sample_features: sampled feature ~ 0");
    for (int row = 0; row < d; ++row) out(row, s) = zr[row] / nv;
  }
  return rate::FeatureBatch(std::move(out), true);
}

struct GridRow {
  int row = 0;
  int cluster = 0;
  int component = 0;
  std::vector<double> ts;
};

struct DecodedGrid {
  Matrix samples;  // D x (rows * samples_per_component), row-major blocks
  std::vector<GridRow> manifest;
  int samples_per_row = 0;
};

// Decodes PC sweeps cluster-major, one grid row per (cluster, component).
inline DecodedGrid decode_grid(const model::Network& decoder,
                               const std::vector<ClusterModel>& models, int components_per_cluster,
                               int samples_per_component, Rng& rng, double noise_scale = 0.0,
                               double t_span = 2.0) {
  if (components_per_cluster < 1 || samples_per_component < 1)
    throw InvalidConfig("decode_grid: components and samples must be >= 1");
  DecodedGrid grid;
  grid.samples_per_row = samples_per_component;

  std::vector<Matrix> rows;
  for (const auto& cm : models) {
    if (!cm.present) continue;
    const int comps = std::min(components_per_cluster, cm.rank());
    for (int c = 0; c < comps; ++c) {
      rate::FeatureBatch feats =
          sample_features(rng, cm, c, samples_per_component, noise_scale, t_span);
      auto [decoded, tape] = model::forward(decoder, feats.z);
      (void)tape;
      GridRow row;
      row.row = static_cast<int>(grid.manifest.size());
      row.cluster = cm.cluster;
      row.component = c;
      for (int s = 0; s < samples_per_component; ++s)
        row.ts.push_back(samples_per_component == 1
                             ? 0.0
                             : -t_span + 2.0 * t_span * s / (samples_per_component - 1));
      grid.manifest.push_back(std::move(row));
      rows.push_back(std::move(decoded));
    }
  }

  if (rows.empty()) throw InvalidConfig("decode_grid: no nonempty cluster models");
  grid.samples = rows[0];
  for (size_t i = 1; i < rows.size(); ++i) grid.samples = hcat(grid.samples, rows[i]);
  return grid;
}

}  // namespace uctrl::gen
