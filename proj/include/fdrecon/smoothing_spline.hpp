#pragma once

// Natural cubic smoothing spline on the grid nodes (Reinsch form), with the
// smoothing parameter chosen by generalized cross-validation.
//
// With knots at every grid point the fitted values g minimize
//   sum_i (y_i - g_i)^2 + lambda * integral g''(u)^2 du
// and solve g = y - lambda Q gamma, where (R + lambda Q'Q) gamma = Q'y.
// Q is N x (N-2) tridiagonal, R is (N-2) x (N-2) tridiagonal, so the system
// is pentadiagonal and symmetric positive definite.

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fdrecon/core_model.hpp"
#include "fdrecon/error.hpp"

namespace fdrecon::spline {

/// 25 values, log10(lambda) = -12, -11.5, ..., 0.
inline std::array<double, 25> lambda_ladder() {
  std::array<double, 25> out{};
  for (size_t k = 0; k < out.size(); ++k) {
    out[k] = std::pow(10.0, -12.0 + 0.5 * static_cast<double>(k));
  }
  return out;
}

namespace detail {

// Symmetric band matrix with two off-diagonals, stored by diagonal.
struct Pentadiagonal {
  Vector d0, d1, d2;  // d1[i] = A(i,i+1), d2[i] = A(i,i+2)
};

// In-place LDL' factorization of a symmetric pentadiagonal matrix.
class BandedLDLT {
 public:
  explicit BandedLDLT(const Pentadiagonal& a) {
    const Index n = a.d0.size();
    diag_ = Vector::Zero(n);
    l1_ = Vector::Zero(n);
    l2_ = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      double dii = a.d0[i];
      if (i >= 1) dii -= l1_[i - 1] * l1_[i - 1] * diag_[i - 1];
      if (i >= 2) dii -= l2_[i - 2] * l2_[i - 2] * diag_[i - 2];
      if (!(dii > 0.0) || !std::isfinite(dii)) {
        throw NumericalError("spline system is singular at row " +
                             std::to_string(i));
      }
      diag_[i] = dii;
      if (i + 1 < n) {
        double v = a.d1[i];
        if (i >= 1) v -= l2_[i - 1] * l1_[i - 1] * diag_[i - 1];
        l1_[i] = v / dii;
      }
      if (i + 2 < n) l2_[i] = a.d2[i] / dii;
    }
  }

  Vector solve(const Vector& b) const {
    const Index n = b.size();
    Vector x = b;
    for (Index i = 0; i < n; ++i) {
      if (i >= 1) x[i] -= l1_[i - 1] * x[i - 1];
      if (i >= 2) x[i] -= l2_[i - 2] * x[i - 2];
    }
    for (Index i = 0; i < n; ++i) x[i] /= diag_[i];
    for (Index i = n - 1; i >= 0; --i) {
      if (i + 1 < n) x[i] -= l1_[i] * x[i + 1];
      if (i + 2 < n) x[i] -= l2_[i] * x[i + 2];
    }
    return x;
  }

 private:
  Vector diag_, l1_, l2_;
};

// Q (N x (N-2)) as three vectors: Q(j, j) = a[j], Q(j+1, j) = b[j],
// Q(j+2, j) = c[j].
struct SplineOperators {
  Vector qa, qb, qc;
  Vector r0, r1;  // R diagonal and first off-diagonal

  explicit SplineOperators(const Grid& grid) {
    const Index n = grid.size();
    const Index m = n - 2;
    qa.resize(m);
    qb.resize(m);
    qc.resize(m);
    r0.resize(m);
    r1 = Vector::Zero(std::max<Index>(m, 1));
    for (Index j = 0; j < m; ++j) {
      const double h0 = grid[j + 1] - grid[j];
      const double h1 = grid[j + 2] - grid[j + 1];
      qa[j] = 1.0 / h0;
      qb[j] = -1.0 / h0 - 1.0 / h1;
      qc[j] = 1.0 / h1;
      r0[j] = (h0 + h1) / 3.0;
      if (j + 1 < m) r1[j] = h1 / 6.0;
    }
  }

  Index interior() const { return qa.size(); }

  Vector qt_times(const Vector& y) const {
    const Index m = interior();
    Vector out(m);
    for (Index j = 0; j < m; ++j) {
      out[j] = qa[j] * y[j] + qb[j] * y[j + 1] + qc[j] * y[j + 2];
    }
    return out;
  }

  Vector q_times(const Vector& g) const {
    const Index m = interior();
    Vector out = Vector::Zero(m + 2);
    for (Index j = 0; j < m; ++j) {
      out[j] += qa[j] * g[j];
      out[j + 1] += qb[j] * g[j];
      out[j + 2] += qc[j] * g[j];
    }
    return out;
  }

  // Q'Q as a pentadiagonal matrix.
  Pentadiagonal qtq() const {
    const Index m = interior();
    Pentadiagonal p{Vector::Zero(m), Vector::Zero(m), Vector::Zero(m)};
    for (Index j = 0; j < m; ++j) {
      p.d0[j] = qa[j] * qa[j] + qb[j] * qb[j] + qc[j] * qc[j];
      if (j + 1 < m) p.d1[j] = qb[j] * qa[j + 1] + qc[j] * qb[j + 1];
      if (j + 2 < m) p.d2[j] = qc[j] * qa[j + 2];
    }
    return p;
  }

  Pentadiagonal system(double lambda) const {
    Pentadiagonal p = qtq();
    const Index m = interior();
    for (Index j = 0; j < m; ++j) {
      p.d0[j] = r0[j] + lambda * p.d0[j];
      p.d1[j] = (j + 1 < m ? r1[j] : 0.0) + lambda * p.d1[j];
      p.d2[j] = lambda * p.d2[j];
    }
    return p;
  }
};

}  // namespace detail

struct SplineFit {
  Vector fitted;
  double lambda = 0.0;
  double trace = 0.0;  // effective degrees of freedom tr(S)
  double gcv = 0.0;
};

/// Fit at a fixed smoothing parameter, including tr(S) and the GCV score.
inline SplineFit smooth_with_lambda(const Vector& y, const Grid& grid,
                                    double lambda) {
  const Index n = grid.size();
  if (y.size() != n) throw DatasetError("spline input does not match grid");
  if (!y.allFinite()) throw DatasetError("spline input has missing values");
  SplineFit out;
  out.lambda = lambda;
  if (n < 3) {
    out.fitted = y;
    out.trace = static_cast<double>(n);
    return out;
  }
  const detail::SplineOperators ops(grid);
  const detail::BandedLDLT solver(ops.system(lambda));
  const Vector gamma = solver.solve(ops.qt_times(y));
  out.fitted = y - lambda * ops.q_times(gamma);

  // tr(S) = N - lambda * tr((R + lambda Q'Q)^{-1} Q'Q)
  const Index m = ops.interior();
  const detail::Pentadiagonal qtq = ops.qtq();
  double tr = 0.0;
  for (Index j = 0; j < m; ++j) {
    Vector col = Vector::Zero(m);
    col[j] = qtq.d0[j];
    if (j + 1 < m) col[j + 1] = qtq.d1[j];
    if (j >= 1) col[j - 1] = qtq.d1[j - 1];
    if (j + 2 < m) col[j + 2] = qtq.d2[j];
    if (j >= 2) col[j - 2] = qtq.d2[j - 2];
    tr += solver.solve(col)[j];
  }
  out.trace = static_cast<double>(n) - lambda * tr;
  const double rss = (y - out.fitted).squaredNorm();
  const double denom = 1.0 - out.trace / static_cast<double>(n);
  out.gcv = denom > 0.0 ? (rss / static_cast<double>(n)) / (denom * denom)
                        : std::numeric_limits<double>::infinity();
  return out;
}

/// GCV-selected fit over the fixed ladder; the first minimum wins.
inline SplineFit smooth_gcv(const Vector& y, const Grid& grid) {
  SplineFit best;
  best.gcv = std::numeric_limits<double>::infinity();
  bool first = true;
  for (double lambda : lambda_ladder()) {
    SplineFit fit = smooth_with_lambda(y, grid, lambda);
    if (first || fit.gcv < best.gcv) {
      best = std::move(fit);
      first = false;
    }
  }
  return best;
}

}  // namespace fdrecon::spline
