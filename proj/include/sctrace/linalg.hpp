#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "sctrace/errors.hpp"
#include "sctrace/grid.hpp"

namespace sctrace {

/// Dense symmetric operator on a quadrature grid. Entries are stored in the
/// quadrature-weighted (similarity-transformed) form, so ordinary matrix
/// eigenvalues/traces coincide with those of the underlying integral or
/// differential operator.
struct GridOperator {
  Grid grid;
  Eigen::MatrixXd mat;

  std::size_t dim() const { return std::size_t(mat.rows()); }
  double trace() const { return mat.trace(); }
};

inline double symmetry_defect(const Eigen::MatrixXd& m) {
  const double scale = std::max(1e-300, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

inline void require_symmetric(const GridOperator& op, double tol = 1e-10) {
  if (op.mat.rows() != op.mat.cols())
    throw ContractError("GridOperator: matrix not square");
  if (std::size_t(op.mat.rows()) != op.grid.size())
    throw ContractError("GridOperator: dimension does not match grid");
  if (symmetry_defect(op.mat) > tol)
    throw ContractError("GridOperator: matrix not symmetric within tolerance");
}

struct EigenResult {
  std::vector<double> values;                   // ascending
  std::optional<Eigen::MatrixXd> vectors;       // columns, weighted-orthonormal
};

/// Full symmetric eigendecomposition (ascending). Backed by Eigen's
/// self-adjoint solver; the contract check rejects non-symmetric input.
inline EigenResult symmetric_eigen(const GridOperator& op, bool want_vectors = false) {
  require_symmetric(op);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.compute(0.5 * (op.mat + op.mat.transpose()),
             want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  EigenResult r;
  r.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  if (want_vectors) r.vectors = es.eigenvectors();
  return r;
}

inline std::vector<double> lowest_eigenvalues(const GridOperator& op, std::size_t k) {
  auto r = symmetric_eigen(op, false);
  if (k < r.values.size()) r.values.resize(k);
  return r.values;
}

/// Symmetric tridiagonal matrix (diag d, off-diagonal e with e[i] coupling
/// i and i+1). Radial and 1-D stencil Hamiltonians have this shape, which
/// lets the negative part of large spectra be found by Sturm bisection
/// without dense factorizations.
struct Tridiagonal {
  std::vector<double> diag;
  std::vector<double> off;  // size diag.size()-1

  std::size_t dim() const { return diag.size(); }
};

/// Number of eigenvalues strictly below lambda (Sturm sequence count).
inline std::size_t sturm_count(const Tridiagonal& t, double lambda) {
  const std::size_t n = t.dim();
  const double tiny = std::numeric_limits<double>::min() * 4.0;
  std::size_t count = 0;
  double q = t.diag[0] - lambda;
  if (q < 0) ++count;
  for (std::size_t i = 1; i < n; ++i) {
    double denom = q;
    if (std::abs(denom) < tiny) denom = (denom < 0 ? -tiny : tiny);
    q = (t.diag[i] - lambda) - t.off[i - 1] * t.off[i - 1] / denom;
    if (q < 0) ++count;
  }
  return count;
}

/// All eigenvalues strictly below `cutoff`, ascending, each located by
/// bisection to rel_tol * max(1, |value|).
inline std::vector<double> tridiag_eigen_below(const Tridiagonal& t, double cutoff,
                                               double rel_tol = 1e-13) {
  const std::size_t m = sturm_count(t, cutoff);
  std::vector<double> out;
  if (m == 0) return out;
  out.reserve(m);

  // Gershgorin lower bound.
  double lo = t.diag[0];
  for (std::size_t i = 0; i < t.dim(); ++i) {
    double r = 0;
    if (i > 0) r += std::abs(t.off[i - 1]);
    if (i + 1 < t.dim()) r += std::abs(t.off[i]);
    lo = std::min(lo, t.diag[i] - r);
  }

  double prev = lo;
  for (std::size_t k = 1; k <= m; ++k) {
    double a = prev, b = cutoff;
    // invariant: count(a) < k <= count(b)
    while (b - a > rel_tol * std::max(1.0, std::min(std::abs(a), std::abs(b)))) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if (sturm_count(t, mid) >= k)
        b = mid;
      else
        a = mid;
    }
    out.push_back(0.5 * (a + b));
    prev = a;  // eigenvalue k+1 lies above the k-th lower bound
  }
  return out;
}

/// One eigenvector of a tridiagonal matrix by shifted inverse iteration
/// (Thomas solve with the shift nudged off the exact eigenvalue).
inline std::vector<double> tridiag_eigenvector(const Tridiagonal& t, double lambda) {
  const std::size_t n = t.dim();
  double scale = 0.0;
  for (double d : t.diag) scale = std::max(scale, std::abs(d));
  const double shift = lambda + 1e-11 * std::max(1.0, scale);

  std::vector<double> v(n, 1.0), a(n), b(n - 1), c(n - 1);
  for (std::size_t iter = 0; iter < 3; ++iter) {
    for (std::size_t i = 0; i < n; ++i) a[i] = t.diag[i] - shift;
    for (std::size_t i = 0; i + 1 < n; ++i) b[i] = c[i] = t.off[i];
    // Thomas elimination without pivoting; the shift keeps pivots nonzero.
    for (std::size_t i = 1; i < n; ++i) {
      const double piv = a[i - 1];
      const double m = (std::abs(piv) > 0 ? c[i - 1] / piv : 0.0);
      a[i] -= m * b[i - 1];
      v[i] -= m * v[i - 1];
    }
    v[n - 1] = (std::abs(a[n - 1]) > 0 ? v[n - 1] / a[n - 1] : 1.0);
    for (std::size_t i = n - 1; i-- > 0;) v[i] = (v[i] - b[i] * v[i + 1]) / a[i];
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

}  // namespace sctrace
