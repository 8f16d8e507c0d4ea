#pragma once

// Deterministic truncated SVD through the smaller Gram matrix, and a dense
// least-squares kernel.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "fdrecon/core_model.hpp"
#include "fdrecon/error.hpp"

namespace fdrecon::linalg {

/// Singular values below kClampRatio * d[0] are set to zero.
inline constexpr double kClampRatio = 1e-12;

struct TruncatedSVD {
  Matrix u;  // m x r, orthonormal columns
  Vector d;  // r, descending, >= 0
  Matrix v;  // n x r, orthonormal columns
  Index rank = 0;

  /// Leading `r` components. Valid because truncations are nested.
  TruncatedSVD leading(Index r) const {
    if (r < 1 || r > rank) {
      throw RankError("cannot take " + std::to_string(r) +
                      " leading components of a rank-" +
                      std::to_string(rank) + " decomposition");
    }
    return {u.leftCols(r), d.head(r), v.leftCols(r), r};
  }

  Matrix reconstruct() const { return u * d.asDiagonal() * v.transpose(); }
};

namespace detail {

// Orthonormalizes the columns of `q` in place with two passes of modified
// Gram-Schmidt. Columns flagged in `fill` (or that collapse numerically) are
// replaced by the first canonical basis vector that survives
// orthogonalization against the preceding columns.
inline void orthonormalize_columns(Matrix& q, const std::vector<bool>& fill) {
  const Index rows = q.rows();
  const Index cols = q.cols();
  auto orthogonalize = [&](Vector& x, Index upto) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Index j = 0; j < upto; ++j) x -= q.col(j).dot(x) * q.col(j);
    }
  };
  for (Index k = 0; k < cols; ++k) {
    bool ok = false;
    if (!fill[static_cast<size_t>(k)]) {
      Vector x = q.col(k);
      const double before = x.norm();
      orthogonalize(x, k);
      const double after = x.norm();
      if (before > 0.0 && after > 0.5 * before) {
        q.col(k) = x / after;
        ok = true;
      }
    }
    for (Index e = 0; !ok && e < rows; ++e) {
      Vector x = Vector::Unit(rows, e);
      orthogonalize(x, k);
      const double norm = x.norm();
      if (norm > 0.5) {
        q.col(k) = x / norm;
        ok = true;
      }
    }
    if (!ok) {
      throw NumericalError("could not complete an orthonormal basis");
    }
  }
}

}  // namespace detail

/// Best rank-r approximation a ~ u diag(d) v'. The symmetric eigenproblem of
/// the smaller Gram matrix (a a' or a' a) gives one side; the other is
/// recovered by projection and re-orthonormalized. Each column pair is
/// oriented so that the largest-magnitude entry of v is positive.
inline TruncatedSVD truncated_svd(const Matrix& a, Index r) {
  const Index m = a.rows();
  const Index n = a.cols();
  if (r < 1 || r > std::min(m, n)) {
    throw RankError("rank " + std::to_string(r) + " is infeasible for a " +
                    std::to_string(m) + "x" + std::to_string(n) + " matrix");
  }
  if (!a.allFinite()) {
    throw NumericalError("truncated_svd input contains non-finite values");
  }

  const bool rows_side = m <= n;
  const Matrix gram = rows_side ? Matrix(a * a.transpose())
                                : Matrix(a.transpose() * a);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("symmetric eigensolver did not converge");
  }
  const Index g = gram.rows();

  TruncatedSVD out;
  out.rank = r;
  out.d.resize(r);
  Matrix solved(g, r);
  // Eigen returns ascending eigenvalues.
  for (Index k = 0; k < r; ++k) {
    const Index src = g - 1 - k;
    out.d[k] = std::sqrt(std::max(eig.eigenvalues()[src], 0.0));
    solved.col(k) = eig.eigenvectors().col(src);
  }
  const double floor = kClampRatio * out.d[0];
  std::vector<bool> clamped(static_cast<size_t>(r));
  for (Index k = 0; k < r; ++k) {
    if (out.d[k] <= floor || out.d[k] == 0.0) {
      out.d[k] = 0.0;
      clamped[static_cast<size_t>(k)] = true;
    }
  }

  Matrix recovered = rows_side ? Matrix(a.transpose() * solved)
                               : Matrix(a * solved);
  for (Index k = 0; k < r; ++k) {
    if (!clamped[static_cast<size_t>(k)]) recovered.col(k) /= out.d[k];
  }
  detail::orthonormalize_columns(recovered, clamped);

  if (rows_side) {
    out.u = std::move(solved);
    out.v = std::move(recovered);
  } else {
    out.u = std::move(recovered);
    out.v = std::move(solved);
  }

  for (Index k = 0; k < r; ++k) {
    Index arg = 0;
    out.v.col(k).cwiseAbs().maxCoeff(&arg);
    if (out.v(arg, k) < 0.0) {
      out.v.col(k) *= -1.0;
      out.u.col(k) *= -1.0;
    }
  }
  return out;
}

namespace detail {

inline void check_conditioning(const Matrix& x) {
  if (x.cols() > x.rows()) {
    throw SingularError("least squares needs at least as many rows as "
                        "columns");
  }
  const Matrix xtx = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(xtx, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(hi > 0.0) || lo / hi < 1e-12) {
    throw SingularError("design matrix is numerically singular");
  }
}

}  // namespace detail

/// argmin_b ||y - x b||_2 for every column of `y`.
inline Matrix least_squares(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) {
    throw SingularError("least squares: row mismatch between design and "
                        "response");
  }
  detail::check_conditioning(x);
  return x.householderQr().solve(y);
}

inline Vector least_squares(const Matrix& x, const Vector& y) {
  return least_squares(x, Matrix(y)).col(0);
}

}  // namespace fdrecon::linalg
