#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uctrl/linalg.hpp"
#include "uctrl/matrix.hpp"
#include "uctrl/parallel.hpp"

namespace uctrl::rate {

struct RateParams {
  double epsilon_sq = 0.2;  // squared distortion
};

// d x N feature batch; columns are samples. When `unit` is set the columns
// are expected on the unit sphere.
struct FeatureBatch {
  Matrix z;
  bool unit = false;

  FeatureBatch() = default;
  explicit FeatureBatch(Matrix m, bool unit_norm = false) : z(std::move(m)), unit(unit_norm) {
    if (z.rows() < 1 || z.cols() < 1)
      throw DimensionMismatch("FeatureBatch: need d >= 1, N >= 1");
    check_finite(z, "FeatureBatch");
    if (unit) {
      for (int j = 0; j < z.cols(); ++j)
        if (std::abs(z.col_norm(j) - 1.0) > 1e-8)
          throw NotUnitNorm("FeatureBatch: column " + std::to_string(j) + " off the unit sphere");
    }
  }

  int dim() const { return z.rows(); }
  int count() const { return z.cols(); }
};

// N x k soft assignment; each row lives on the probability simplex.
struct Membership {
  Matrix p;

  Membership() = default;
  explicit Membership(Matrix m) : p(std::move(m)) {
    check_finite(p, "Membership");
    for (int i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (int j = 0; j < p.cols(); ++j) {
        if (p(i, j) < -1e-12)
          throw InvalidConfig("Membership: negative probability at row " + std::to_string(i));
        s += p(i, j);
      }
      if (std::abs(s - 1.0) > 1e-8)
        throw InvalidConfig("Membership: row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }

  static Membership uniform(int n, int k) {
    Matrix m(n, k, 1.0 / k);
    return Membership(std::move(m));
  }

  int samples() const { return p.rows(); }
  int clusters() const { return p.cols(); }
};

struct RateBreakdown {
  double expansion = 0.0;    // R term, nats
  double compression = 0.0;  // R^c term, nats
  double total = 0.0;        // expansion - compression
};

enum class DistanceMode { exact_dr, cosine, l2 };

inline DistanceMode distance_mode_from_string(const std::string& s) {
  if (s == "exact_dr") return DistanceMode::exact_dr;
  if (s == "cosine") return DistanceMode::cosine;
  if (s == "l2") return DistanceMode::l2;
  throw InvalidConfig("unknown distance mode: " + s);
}

inline const char* to_string(DistanceMode m) {
  switch (m) {
    case DistanceMode::exact_dr: return "exact_dr";
    case DistanceMode::cosine: return "cosine";
    case DistanceMode::l2: return "l2";
  }
  return "?";
}

namespace detail {

// log det(I + alpha * Z Z^T) computed on the cheaper Gram side:
// det(I_d + a ZZ^T) = det(I_N + a Z^T Z).
inline double logdet_i_plus_gram(const Matrix& z, double alpha) {
  const int d = z.rows(), n = z.cols();
  Matrix g = (d <= n) ? gram_nt(z) : gram_tn(z);
  scale_in_place(g, alpha);
  for (int i = 0; i < g.rows(); ++i) g(i, i) += 1.0;
  return cholesky_logdet(g, 0.0);
}

// alpha * (I + alpha Z Z^T)^{-1} Z, again on the cheaper side via the
// push-through identity (I + a ZZ^T)^{-1} Z = Z (I + a Z^T Z)^{-1}.
inline Matrix gram_grad(const Matrix& z, double alpha) {
  const int d = z.rows(), n = z.cols();
  if (d <= n) {
    Matrix a = gram_nt(z);
    scale_in_place(a, alpha);
    for (int i = 0; i < d; ++i) a(i, i) += 1.0;
    Matrix x = spd_solve(a, z);
    scale_in_place(x, alpha);
    return x;
  }
  Matrix a = gram_tn(z);
  scale_in_place(a, alpha);
  for (int i = 0; i < n; ++i) a(i, i) += 1.0;
  Matrix x = transpose(spd_solve(a, transpose(z)));
  scale_in_place(x, alpha);
  return x;
}

}  // namespace detail

// R(Z) = 1/2 log det(I + d/(N eps^2) Z Z^T).
inline double coding_rate(const FeatureBatch& zb, const RateParams& p) {
  const double alpha = zb.dim() / (static_cast<double>(zb.count()) * p.epsilon_sq);
  return 0.5 * detail::logdet_i_plus_gram(zb.z, alpha);
}

// dR/dZ = alpha (I + alpha Z Z^T)^{-1} Z.
inline Matrix coding_rate_grad(const FeatureBatch& zb, const RateParams& p) {
  const double alpha = zb.dim() / (static_cast<double>(zb.count()) * p.epsilon_sq);
  return detail::gram_grad(zb.z, alpha);
}

// Expansion minus membership-weighted compression. Clusters with mass below
// 1e-12 contribute zero (the limit of the term as mass -> 0).
inline RateBreakdown rate_reduction(const FeatureBatch& zb, const Membership& pi,
                                    const RateParams& p) {
  if (pi.samples() != zb.count())
    throw DimensionMismatch("rate_reduction: membership rows != batch columns");
  const int d = zb.dim(), n = zb.count(), k = pi.clusters();
  RateBreakdown out;
  out.expansion = coding_rate(zb, p);

  std::vector<double> terms(k, 0.0);
  auto cluster_term = [&](int j) {
    double mass = 0.0;
    for (int i = 0; i < n; ++i) mass += pi.p(i, j);
    if (mass < 1e-12) return;
    const double beta = d / (mass * p.epsilon_sq);
    double ld;
    if (d <= n) {
      // I_d + beta * sum_i p_ij z_i z_i^T
      Matrix a(d, d);
      for (int i = 0; i < n; ++i) {
        double w = beta * pi.p(i, j);
        if (w == 0.0) continue;
        for (int r = 0; r < d; ++r) {
          double zr = w * zb.z(r, i);
          for (int c = 0; c < d; ++c) a(r, c) += zr * zb.z(c, i);
        }
      }
      for (int i = 0; i < d; ++i) a(i, i) += 1.0;
      ld = cholesky_logdet(a, 0.0);
    } else {
      // det(I_d + beta Z Pi Z^T) = det(I_N + beta Pi^{1/2} Z^T Z Pi^{1/2})
      Matrix g = gram_tn(zb.z);
      Matrix a(n, n);
      std::vector<double> sq(n);
      for (int i = 0; i < n; ++i) sq[i] = std::sqrt(std::max(0.0, pi.p(i, j)));
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) a(r, c) = beta * sq[r] * sq[c] * g(r, c);
      for (int i = 0; i < n; ++i) a(i, i) += 1.0;
      ld = cholesky_logdet(a, 0.0);
    }
    terms[j] = mass / (2.0 * n) * ld;
  };
  if (k >= 4)
    parallel_for(k, cluster_term);
  else
    for (int j = 0; j < k; ++j) cluster_term(j);

  for (int j = 0; j < k; ++j) out.compression += terms[j];
  out.total = out.expansion - out.compression;
  return out;
}

// Delta R(Z, Zhat) = R(Z u Zhat) - (R(Z) + R(Zhat)) / 2.
inline double pair_rate_reduction(const FeatureBatch& zb, const FeatureBatch& zhb,
                                  const RateParams& p) {
  if (zb.dim() != zhb.dim())
    throw DimensionMismatch("pair_rate_reduction: feature dims differ");
  FeatureBatch u(hcat(zb.z, zhb.z));
  return coding_rate(u, p) - 0.5 * (coding_rate(zb, p) + coding_rate(zhb, p));
}

struct PairGrads {
  Matrix wrt_z;
  Matrix wrt_zhat;
};

inline PairGrads pair_rate_reduction_grads(const FeatureBatch& zb, const FeatureBatch& zhb,
                                           const RateParams& p) {
  if (zb.dim() != zhb.dim())
    throw DimensionMismatch("pair_rate_reduction_grads: feature dims differ");
  FeatureBatch u(hcat(zb.z, zhb.z));
  Matrix gu = coding_rate_grad(u, p);
  PairGrads out;
  out.wrt_z = cols_range(gu, 0, zb.count());
  out.wrt_zhat = cols_range(gu, zb.count(), u.count());
  axpy_in_place(out.wrt_z, -0.5, coding_rate_grad(zb, p));
  axpy_in_place(out.wrt_zhat, -0.5, coding_rate_grad(zhb, p));
  return out;
}

// Per-sample distance per the chosen approximation of the two-vector Delta R.
inline double sample_distance(const std::vector<double>& z, const std::vector<double>& zh,
                              DistanceMode mode, const RateParams& p) {
  if (z.size() != zh.size()) throw DimensionMismatch("sample_distance: dims differ");
  switch (mode) {
    case DistanceMode::l2: {
      double s = 0.0;
      for (size_t i = 0; i < z.size(); ++i) {
        double d = z[i] - zh[i];
        s += d * d;
      }
      return s;
    }
    case DistanceMode::cosine: {
      double nz = norm2(z), nh = norm2(zh);
      if (nz < 1e-12 || nh < 1e-12) throw ZeroVector("sample_distance: cosine of ~zero vector");
      return 1.0 - dot(z, zh) / (nz * nh);
    }
    case DistanceMode::exact_dr: {
      Matrix a(static_cast<int>(z.size()), 1), b(static_cast<int>(zh.size()), 1);
      for (size_t i = 0; i < z.size(); ++i) {
        a(static_cast<int>(i), 0) = z[i];
        b(static_cast<int>(i), 0) = zh[i];
      }
      return pair_rate_reduction(FeatureBatch(std::move(a)), FeatureBatch(std::move(b)), p);
    }
  }
  throw InvalidConfig("sample_distance: bad mode");
}

struct SampleDistanceGrads {
  double value = 0.0;
  std::vector<double> wrt_z;
  std::vector<double> wrt_zhat;
};

inline SampleDistanceGrads sample_distance_grads(const std::vector<double>& z,
                                                 const std::vector<double>& zh,
                                                 DistanceMode mode, const RateParams& p) {
  if (z.size() != zh.size()) throw DimensionMismatch("sample_distance_grads: dims differ");
  SampleDistanceGrads out;
  const size_t n = z.size();
  out.wrt_z.assign(n, 0.0);
  out.wrt_zhat.assign(n, 0.0);
  switch (mode) {
    case DistanceMode::l2: {
      double s = 0.0;
      for (size_t i = 0; i < n; ++i) {
        double d = z[i] - zh[i];
        s += d * d;
        out.wrt_z[i] = 2.0 * d;
        out.wrt_zhat[i] = -2.0 * d;
      }
      out.value = s;
      return out;
    }
    case DistanceMode::cosine: {
      double nz = norm2(z), nh = norm2(zh);
      if (nz < 1e-12 || nh < 1e-12)
        throw ZeroVector("sample_distance_grads: cosine of ~zero vector");
      double ip = dot(z, zh);
      out.value = 1.0 - ip / (nz * nh);
      for (size_t i = 0; i < n; ++i) {
        out.wrt_z[i] = -(zh[i] / (nz * nh) - ip * z[i] / (nz * nz * nz * nh));
        out.wrt_zhat[i] = -(z[i] / (nz * nh) - ip * zh[i] / (nh * nh * nh * nz));
      }
      return out;
    }
    case DistanceMode::exact_dr: {
      Matrix a(static_cast<int>(n), 1), b(static_cast<int>(n), 1);
      for (size_t i = 0; i < n; ++i) {
        a(static_cast<int>(i), 0) = z[i];
        b(static_cast<int>(i), 0) = zh[i];
      }
      FeatureBatch fa(std::move(a)), fb(std::move(b));
      out.value = pair_rate_reduction(fa, fb, p);
      PairGrads g = pair_rate_reduction_grads(fa, fb, p);
      for (size_t i = 0; i < n; ++i) {
        out.wrt_z[i] = g.wrt_z(static_cast<int>(i), 0);
        out.wrt_zhat[i] = g.wrt_zhat(static_cast<int>(i), 0);
      }
      return out;
    }
  }
  throw InvalidConfig("sample_distance_grads: bad mode");
}

// Gradient of rate_reduction(...).total with respect to the membership
// entries, projected onto the simplex tangent (rows centered). For cluster j
// with mass m, A = I + beta Z Pi_j Z^T, the raw partial is
//   -1/(2N) [ log det A + (d/eps^2) z_i^T A^{-1} z_i - d + tr A^{-1} ].
inline Matrix rate_reduction_grad_membership(const FeatureBatch& zb, const Membership& pi,
                                             const RateParams& p) {
  if (pi.samples() != zb.count())
    throw DimensionMismatch("rate_reduction_grad_membership: membership rows != batch columns");
  const int d = zb.dim(), n = zb.count(), k = pi.clusters();
  Matrix g(n, k);

  auto cluster_grad = [&](int j) {
    double mass = 0.0;
    for (int i = 0; i < n; ++i) mass += pi.p(i, j);
    if (mass < 1e-12) return;  // term dropped -> no gradient contribution
    const double beta = d / (mass * p.epsilon_sq);
    Matrix a(d, d);
    for (int i = 0; i < n; ++i) {
      double w = beta * pi.p(i, j);
      if (w == 0.0) continue;
      for (int r = 0; r < d; ++r) {
        double zr = w * zb.z(r, i);
        for (int c = 0; c < d; ++c) a(r, c) += zr * zb.z(c, i);
      }
    }
    for (int i = 0; i < d; ++i) a(i, i) += 1.0;
    double ld = cholesky_logdet(a, 0.0);
    Matrix ainv = spd_solve(a, Matrix::identity(d));
    double tr_inv = 0.0;
    for (int i = 0; i < d; ++i) tr_inv += ainv(i, i);
    Matrix w = matmul(ainv, zb.z);  // d x N
    const double de2 = d / p.epsilon_sq;
    for (int i = 0; i < n; ++i) {
      double quad = 0.0;
      for (int r = 0; r < d; ++r) quad += zb.z(r, i) * w(r, i);
      g(i, j) = -(ld + de2 * quad - d + tr_inv) / (2.0 * n);
    }
  };
  if (k >= 4)
    parallel_for(k, cluster_grad);
  else
    for (int j = 0; j < k; ++j) cluster_grad(j);

  // Project onto the simplex tangent: row-constant shifts are invisible to
  // any parameterization of Omega.
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < k; ++j) mean += g(i, j);
    mean /= k;
    for (int j = 0; j < k; ++j) g(i, j) -= mean;
  }
  return g;
}

}  // namespace uctrl::rate
