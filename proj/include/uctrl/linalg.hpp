#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "uctrl/matrix.hpp"
#include "uctrl/rng.hpp"

namespace uctrl {

inline void check_square(const Matrix& a, const char* where) {
  if (a.rows() != a.cols())
    throw DimensionMismatch(std::string(where) + ": matrix not square");
}

// Symmetry within 1e-10 * ||A||_max.
inline void check_symmetric(const Matrix& a, const char* where) {
  check_square(a, where);
  double tol = 1e-10 * a.max_abs();
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol)
        throw NotSymmetric(std::string(where) + ": asymmetry exceeds tolerance");
}

namespace detail {

// Lower Cholesky of A + jitter*I into L. Returns false on a non-positive or
// non-finite pivot instead of throwing so the caller can apply jitter policy.
inline bool try_cholesky(const Matrix& a, double jitter, Matrix& l) {
  int n = a.rows();
  l = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a(i, j) + (i == j ? jitter : 0.0);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > 0.0) || !std::isfinite(s)) return false;
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return true;
}

}  // namespace detail

// Factor A + jitter*I once, with the retry policy: on failure a single
// retry at jitter = 1e-10 * trace(A)/n, then NotPositiveDefinite.
inline Matrix cholesky_factor(const Matrix& a, double jitter = 0.0) {
  check_symmetric(a, "cholesky");
  Matrix l;
  if (detail::try_cholesky(a, jitter, l)) return l;
  double tr = 0.0;
  for (int i = 0; i < a.rows(); ++i) tr += a(i, i);
  double retry = 1e-10 * tr / std::max(1, a.rows());
  if (detail::try_cholesky(a, retry, l)) return l;
  throw NotPositiveDefinite("cholesky: matrix not positive definite after jitter retry");
}

// log det(A + jitter*I) = 2 * sum log L_ii.
inline double cholesky_logdet(const Matrix& a, double jitter = 0.0) {
  Matrix l = cholesky_factor(a, jitter);
  double s = 0.0;
  for (int i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

// Solves A X = B for SPD A via Cholesky forward/back substitution.
inline Matrix spd_solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("spd_solve: A rows != B rows");
  Matrix l = cholesky_factor(a, 0.0);
  int n = a.rows(), m = b.cols();
  Matrix y(n, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < n; ++i) {
      double s = b(i, j);
      for (int k = 0; k < i; ++k) s -= l(i, k) * y(k, j);
      y(i, j) = s / l(i, i);
    }
  Matrix x(n, m);
  for (int j = 0; j < m; ++j)
    for (int i = n - 1; i >= 0; --i) {
      double s = y(i, j);
      for (int k = i + 1; k < n; ++k) s -= l(k, i) * x(k, j);
      x(i, j) = s / l(i, i);
    }
  return x;
}

struct SymEig {
  std::vector<double> values;  // ascending
  Matrix vectors;              // columns, orthonormal, aligned with values
};

// Cyclic Jacobi. Cap of 100 sweeps, off-diagonal tolerance 1e-12 relative
// to the Frobenius norm of the input.
inline SymEig sym_eig(const Matrix& a_in) {
  check_symmetric(a_in, "sym_eig");
  int n = a_in.rows();
  Matrix a = a_in;
  Matrix v = Matrix::identity(n);
  double tol = 1e-12 * std::max(a_in.frobenius(), 1e-300);

  auto off_max = [&]() {
    double m = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) m = std::max(m, std::abs(a(p, q)));
    return m;
  };

  int sweep = 0;
  for (; sweep < 100; ++sweep) {
    if (off_max() <= tol) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::abs(apq) <= tol * 1e-3) continue;
        double app = a(p, p), aqq = a(q, q);
        double theta = (aqq - app) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;

        for (int k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off_max() > tol && sweep == 100)
    throw NoConvergence("sym_eig: Jacobi did not converge in 100 sweeps");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(n);
  for (int i = 0; i < n; ++i) diag[i] = a(i, i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return diag[i] < diag[j]; });

  SymEig out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    int src = order[j];
    out.values[j] = diag[src];
    // Sign convention: the entry of largest magnitude is positive.
    int imax = 0;
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
      double x = std::abs(v(i, src));
      if (x > best) {
        best = x;
        imax = i;
      }
    }
    double sgn = v(imax, src) >= 0.0 ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i) out.vectors(i, j) = sgn * v(i, src);
  }
  return out;
}

// Modified Gram-Schmidt on the columns; returns an orthonormal basis of the
// column span (drops near-dependent columns).
inline Matrix orthonormalize_columns(const Matrix& a) {
  int n = a.rows();
  std::vector<std::vector<double>> basis;
  for (int j = 0; j < a.cols(); ++j) {
    std::vector<double> v = a.col(j);
    for (const auto& b : basis) {
      double p = dot(v, b);
      for (int i = 0; i < n; ++i) v[i] -= p * b[i];
    }
    double nv = norm2(v);
    if (nv < 1e-10) continue;
    for (auto& x : v) x /= nv;
    basis.push_back(std::move(v));
  }
  Matrix q(n, static_cast<int>(basis.size()));
  for (size_t j = 0; j < basis.size(); ++j) q.set_col(static_cast<int>(j), basis[j]);
  return q;
}

// Random n x n orthogonal matrix from Gaussian + Gram-Schmidt.
inline Matrix random_orthogonal(Rng& rng, int n) {
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.next_gaussian();
  Matrix q = orthonormalize_columns(g);
  while (q.cols() < n) {  // astronomically unlikely rank deficiency
    Matrix extra(n, 1);
    for (int i = 0; i < n; ++i) extra(i, 0) = rng.next_gaussian();
    q = orthonormalize_columns(hcat(q, extra));
  }
  return q;
}

}  // namespace uctrl
