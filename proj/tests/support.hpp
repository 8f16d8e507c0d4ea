#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance binary. Nothing here calls into the library's linear algebra.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "fdrecon/core_model.hpp"
#include "fdrecon/random.hpp"

namespace fdrecon::testing {

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = rng::standard_normal(seed, 99, static_cast<std::uint64_t>(i),
                                     static_cast<std::uint64_t>(j));
    }
  }
  return m;
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with matching eigenvector columns.
inline std::pair<std::vector<double>, std::vector<std::vector<double>>>
jacobi_eigen(std::vector<std::vector<double>> a) {
  const size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (size_t p = 0; p < n; ++p)
      for (size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (size_t p = 0; p < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t x, size_t y) { return a[x][x] > a[y][y]; });
  std::vector<double> values(n);
  std::vector<std::vector<double>> vectors(n, std::vector<double>(n));
  for (size_t j = 0; j < n; ++j) {
    values[j] = a[order[j]][order[j]];
    for (size_t k = 0; k < n; ++k) vectors[k][j] = v[k][order[j]];
  }
  return {values, vectors};
}

/// Singular values of `a` from the Jacobi eigenvalues of a'a.
inline std::vector<double> oracle_singular_values(const Matrix& a) {
  const auto n = static_cast<size_t>(a.cols());
  std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      for (Index k = 0; k < a.rows(); ++k)
        g[i][j] += a(k, static_cast<Index>(i)) * a(k, static_cast<Index>(j));
  auto [values, vectors] = jacobi_eigen(g);
  for (double& x : values) x = std::sqrt(std::max(x, 0.0));
  return values;
}

/// Solves the square system m x = b by Gaussian elimination with partial
/// pivoting.
inline std::vector<double> gauss_solve(std::vector<std::vector<double>> m,
                                       std::vector<double> b) {
  const size_t n = b.size();
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    std::swap(m[col], m[piv]);
    std::swap(b[col], b[piv]);
    for (size_t r = col + 1; r < n; ++r) {
      const double f = m[r][col] / m[col][col];
      for (size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (size_t c = i + 1; c < n; ++c) acc -= m[i][c] * x[c];
    x[i] = acc / m[i][i];
  }
  return x;
}

/// Least squares via explicitly formed normal equations x'x b = x'y.
inline std::vector<double> normal_equations(const Matrix& x, const Vector& y) {
  const auto p = static_cast<size_t>(x.cols());
  std::vector<std::vector<double>> xtx(p, std::vector<double>(p, 0.0));
  std::vector<double> xty(p, 0.0);
  for (Index k = 0; k < x.rows(); ++k) {
    for (size_t i = 0; i < p; ++i) {
      xty[i] += x(k, static_cast<Index>(i)) * y[k];
      for (size_t j = 0; j < p; ++j) {
        xtx[i][j] += x(k, static_cast<Index>(i)) * x(k, static_cast<Index>(j));
      }
    }
  }
  return gauss_solve(xtx, xty);
}

/// Explicit inverse of a 3x3 matrix (cofactor formula).
inline std::vector<std::vector<double>> inverse3(const std::vector<std::vector<double>>& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  std::vector<std::vector<double>> inv(3, std::vector<double>(3));
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

/// Three curves on five grid points with one covariate; curve 3 (index 2)
/// is missing at u_4 (index 3).
inline FunctionalDataset fig2_toy() {
  Matrix target(3, 5);
  target << 0.3, 1.1, 1.9, 1.2, 0.4,
            -0.2, 0.5, 1.4, 1.6, 0.9,
            0.1, 0.8, 1.7, 0.0, 0.6;
  Matrix cov(3, 5);
  cov << 1.0, 0.7, 0.2, -0.4, -0.9,
         0.6, 0.9, 0.8, 0.1, -0.3,
         0.8, 0.5, 0.1, -0.2, -0.7;
  Mask mask = Mask::Constant(3, 5, true);
  mask(2, 3) = false;
  return FunctionalDataset(Grid::equispaced(5), target, mask, {cov});
}

inline double fourier(Index k, double u) {
  const auto l = static_cast<double>((k + 1) / 2);
  const double arg = 2.0 * l * std::numbers::pi * u;
  return std::numbers::sqrt2 * (k % 2 == 1 ? std::sin(arg) : std::cos(arg));
}

/// Noiseless exact-rank data: X_t(u) = sum_{k<=r} s_tk phi_k(u) with
/// independent N(0, 1/k) scores, plus a covariate channel carrying the same
/// scores on the shifted basis phi_{k+r}. Optional N(0, sigma^2) noise.
struct ExactRank {
  Matrix scores;  // T x r
  Matrix target;  // T x N
  Matrix covariate;
  Grid grid;
};

inline ExactRank exact_rank_data(Index t, Index n, Index r, std::uint64_t seed,
                                 double sigma = 0.0) {
  ExactRank out;
  out.grid = Grid::equispaced(n);
  out.scores.resize(t, r);
  for (Index s = 0; s < t; ++s)
    for (Index k = 0; k < r; ++k)
      out.scores(s, k) = rng::standard_normal(seed, 11, static_cast<std::uint64_t>(s),
                                              static_cast<std::uint64_t>(k)) /
                         std::sqrt(static_cast<double>(k + 1));
  out.target = Matrix::Zero(t, n);
  out.covariate = Matrix::Zero(t, n);
  for (Index s = 0; s < t; ++s) {
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < r; ++k) {
        out.target(s, i) += out.scores(s, k) * fourier(k + 1, out.grid[i]);
        out.covariate(s, i) += out.scores(s, k) * fourier(k + 1 + r, out.grid[i]);
      }
      out.target(s, i) += sigma * rng::standard_normal(seed, 12, static_cast<std::uint64_t>(s),
                                                       static_cast<std::uint64_t>(i));
      out.covariate(s, i) += sigma * rng::standard_normal(seed, 13, static_cast<std::uint64_t>(s),
                                                          static_cast<std::uint64_t>(i));
    }
  }
  return out;
}

inline FunctionalDataset as_dataset(const ExactRank& e, bool covariate,
                                    const Mask* mask = nullptr) {
  std::vector<Matrix> covs;
  if (covariate) covs.push_back(e.covariate);
  if (mask != nullptr) return FunctionalDataset(e.grid, e.target, *mask, covs);
  return FunctionalDataset(e.grid, e.target, covs);
}

}  // namespace fdrecon::testing
