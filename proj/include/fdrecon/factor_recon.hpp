#pragma once

// Factor-based best linear reconstruction of partially observed curves.
//
// For an observation pattern O the complete curves are stacked into Y_O
// (observed target columns plus all covariate columns) and Y_C (all
// columns). Principal components of Y_O / sqrt(N T_C) give the factor
// matrix F = sqrt(T_C) U and, for a new curve with partial measurements
// y_O, the scores f = y_O V D^{-1} / sqrt(N). The target at grid point u_i is
// then predicted by regressing column y_{c,i} of Y_C on F:
//
//   L(u_i) = f (F'F)^{-1} F' y_{c,i}.
//
// The formulas assume centered curves, so by default every stacked column
// is centered by its mean over the complete curves before the SVD and the
// target mean is added back to the prediction. A separate fit is needed for
// every distinct pattern.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "fdrecon/core_model.hpp"
#include "fdrecon/error.hpp"
#include "fdrecon/linalg.hpp"

namespace fdrecon {

struct FactorFit {
  linalg::TruncatedSVD svd;
  Index rank = 0;
  Matrix f_hat;  // T_C x r, (1/T_C) F'F = I
  ObservationPattern pattern;
  std::vector<double> weights;
  std::vector<StackedColumn> column_map;
  Index n_points = 0;
  bool centered = true;
  RowVector observed_mean;  // N_O, weighted units; zero when not centered
  RowVector target_mean;    // N, weighted units; zero when not centered

  Index n_complete() const { return f_hat.rows(); }

  FactorFit leading(Index r) const {
    FactorFit out = *this;
    out.svd = svd.leading(r);
    out.rank = r;
    out.f_hat = f_hat.leftCols(r);
    return out;
  }
};

struct FitOptions {
  bool center = true;
};

inline FactorFit fit_factors(const StackedMatrices& stacked, Index r,
                             const FitOptions& options = {}) {
  const Index t_c = stacked.n_rows();
  const double n = static_cast<double>(stacked.n_points);

  FactorFit fit;
  fit.centered = options.center;
  if (options.center) {
    fit.observed_mean = stacked.y_observed.colwise().mean();
    fit.target_mean = stacked.target_block().colwise().mean();
  } else {
    fit.observed_mean = RowVector::Zero(stacked.y_observed.cols());
    fit.target_mean = RowVector::Zero(stacked.n_points);
  }
  const Matrix scaled =
      (stacked.y_observed.rowwise() - fit.observed_mean) /
      std::sqrt(n * static_cast<double>(t_c));

  fit.svd = linalg::truncated_svd(scaled, r);
  fit.rank = r;
  fit.f_hat = std::sqrt(static_cast<double>(t_c)) * fit.svd.u;
  fit.pattern = stacked.pattern;
  fit.weights = stacked.weights;
  fit.column_map = stacked.column_map;
  fit.n_points = stacked.n_points;
  return fit;
}

/// Factor scores f_{O,s} = y_{O,s} V D^{-1} / sqrt(N) of a partially observed
/// curve (y_{O,s} taken relative to the fit's column means).
inline RowVector project_curve(const FactorFit& fit, const RowVector& y_partial) {
  const Index n_o = fit.svd.v.rows();
  if (y_partial.size() != n_o) {
    throw DatasetError("partial curve has " + std::to_string(y_partial.size()) +
                       " entries, the fit expects " + std::to_string(n_o));
  }
  if (!y_partial.allFinite()) {
    throw DatasetError("partial curve contains non-finite values");
  }
  const Vector& d = fit.svd.d;
  const double floor = linalg::kClampRatio * d[0];
  for (Index k = 0; k < d.size(); ++k) {
    if (!(d[k] > floor)) {
      throw SingularError("singular value " + std::to_string(k + 1) +
                          " is numerically zero; rank " +
                          std::to_string(fit.rank) + " is too high for the "
                          "data");
    }
  }
  const RowVector proj = (y_partial - fit.observed_mean) * fit.svd.v;
  return (proj.array() / d.transpose().array()).matrix() /
         std::sqrt(static_cast<double>(fit.n_points));
}

/// Regression coefficients (F'F)^{-1} F' y_{c,i} for all grid points,
/// r x N, in weighted target units.
inline Matrix regression_coefficients(const FactorFit& fit,
                                      const StackedMatrices& stacked) {
  if (stacked.n_rows() != fit.n_complete() ||
      stacked.n_points != fit.n_points) {
    throw DatasetError("stacked matrices do not match the factor fit");
  }
  const Matrix centered = stacked.target_block().rowwise() - fit.target_mean;
  return linalg::least_squares(fit.f_hat, centered);
}

/// A factor fit bundled with its regression coefficients; maps y_{O,s} to
/// reconstructed target values on the full grid.
class Reconstructor {
 public:
  Reconstructor(FactorFit fit, const StackedMatrices& stacked)
      : fit_(std::move(fit)),
        coefficients_(regression_coefficients(fit_, stacked)),
        unweight_(1.0 / std::sqrt(fit_.weights.at(0))) {}

  Vector apply(const RowVector& y_partial) const {
    return (unweight_ * (fit_.target_mean +
                         project_curve(fit_, y_partial) * coefficients_))
        .transpose();
  }

  const FactorFit& fit() const noexcept { return fit_; }
  const Matrix& coefficients() const noexcept { return coefficients_; }

 private:
  FactorFit fit_;
  Matrix coefficients_;
  double unweight_;
};

/// Reconstructed target values at u_1..u_N in original target units. Values
/// on O are fitted (denoised), not copies of the measurements.
inline Vector reconstruct_grid(const FactorFit& fit, const RowVector& y_partial,
                               const StackedMatrices& stacked) {
  return Reconstructor(fit, stacked).apply(y_partial);
}

/// Piecewise-linear value at u in [0,1]; nodes are reproduced exactly.
inline double interpolate(const Vector& grid_values, const Grid& grid,
                          double u) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw DomainError("interpolation point " + std::to_string(u) +
                      " is outside [0,1]");
  }
  const Index n = grid.size();
  if (grid_values.size() != n) {
    throw DomainError("grid values do not match grid size");
  }
  auto i = static_cast<Index>(std::floor(u * static_cast<double>(n - 1)));
  i = std::clamp<Index>(i, 0, n - 1);
  while (i + 1 < n && u >= grid[i + 1]) ++i;
  while (i > 0 && u < grid[i]) --i;
  if (u == grid[i] || i == n - 1) return grid_values[i];
  const double frac = (u - grid[i]) / (grid[i + 1] - grid[i]);
  return grid_values[i] + frac * (grid_values[i + 1] - grid_values[i]);
}

/// Continuous interpolant of grid values.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  PiecewiseLinear(Grid grid, Vector values)
      : grid_(std::move(grid)), values_(std::move(values)) {}

  double operator()(double u) const { return interpolate(values_, grid_, u); }
  const Grid& grid() const noexcept { return grid_; }
  const Vector& values() const noexcept { return values_; }

 private:
  Grid grid_;
  Vector values_;
};

struct Reconstruction {
  Index curve = 0;
  Vector grid_values;
  PiecewiseLinear continuous;
  Vector fitted_on_observed;
  Index rank_used = 0;
  ObservationPattern pattern;
};

/// Thread-safe cache of reconstructors keyed by (pattern bits, weights,
/// rank). Fits depend only on the complete subsample, so reuse is exact.
class PatternCache {
 public:
  using Key = std::tuple<std::string, std::vector<double>, Index>;

  template <typename Make>
  std::shared_ptr<const Reconstructor> get_or_create(const Key& key,
                                                     Make&& make) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) {
        return it->second;
      }
    }
    auto created = std::make_shared<const Reconstructor>(make());
    std::lock_guard lock(mutex_);
    auto [it, inserted] = entries_.emplace(key, std::move(created));
    return it->second;
  }

  size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<Key, std::shared_ptr<const Reconstructor>> entries_;
};

/// Fits (or fetches) the rank-r reconstructor for `pattern` on the complete
/// subsample of `dataset`.
inline std::shared_ptr<const Reconstructor> reconstructor_for(
    const FunctionalDataset& dataset, const ObservationPattern& pattern,
    Index r, std::span<const double> weights, PatternCache* cache = nullptr,
    const FitOptions& options = {}) {
  auto make = [&] {
    const StackedMatrices stacked = assemble(dataset, pattern, weights);
    return Reconstructor(fit_factors(stacked, r, options), stacked);
  };
  if (cache == nullptr) return std::make_shared<const Reconstructor>(make());
  PatternCache::Key key{pattern.key() + (options.center ? "c" : "u"),
                        std::vector<double>(weights.begin(), weights.end()), r};
  return cache->get_or_create(key, make);
}

inline Reconstruction reconstruct(const FunctionalDataset& dataset,
                                  Index curve, Index r,
                                  std::span<const double> weights,
                                  PatternCache* cache = nullptr,
                                  const FitOptions& options = {}) {
  const ObservationPattern pattern = pattern_of(dataset, curve);
  const auto op =
      reconstructor_for(dataset, pattern, r, weights, cache, options);
  Reconstruction out;
  out.curve = curve;
  out.rank_used = r;
  out.pattern = pattern;
  out.grid_values = op->apply(stack_observed(dataset, curve, pattern, weights));
  out.continuous = PiecewiseLinear(dataset.grid(), out.grid_values);
  const auto observed = pattern.observed_indices();
  out.fitted_on_observed.resize(static_cast<Index>(observed.size()));
  for (size_t j = 0; j < observed.size(); ++j) {
    out.fitted_on_observed[static_cast<Index>(j)] = out.grid_values[observed[j]];
  }
  return out;
}

/// Grid values with the raw measurements put back on O.
inline Vector splice_observed(const Reconstruction& recon,
                              const FunctionalDataset& dataset) {
  Vector out = recon.grid_values;
  for (Index i = 0; i < out.size(); ++i) {
    if (dataset.mask()(recon.curve, i)) out[i] = dataset.target()(recon.curve, i);
  }
  return out;
}

}  // namespace fdrecon
