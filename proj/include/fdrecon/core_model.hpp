#pragma once

// Data model for discretely sampled multivariate functional data: an
// equispaced grid on [0,1], a partially observed target channel and D fully
// observed covariate channels, plus the row-stacked matrices consumed by the
// factor estimators.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fdrecon/error.hpp"

namespace fdrecon {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

/// Equispaced grid 0 = u_1 < ... < u_N = 1.
class Grid {
 public:
  static constexpr double kSpacingTolerance = 1e-12;

  Grid() = default;

  static Grid equispaced(Index n_points) {
    if (n_points < 2) {
      throw DatasetError("grid needs at least 2 points, got " +
                         std::to_string(n_points));
    }
    Grid g;
    g.points_.resize(n_points);
    const double denom = static_cast<double>(n_points - 1);
    for (Index i = 0; i < n_points; ++i) {
      g.points_[i] = static_cast<double>(i) / denom;
    }
    g.points_[n_points - 1] = 1.0;
    return g;
  }

  /// Validates user-supplied grid points against the equispaced contract
  /// (within `tolerance` of the ideal spacing) and snaps them to the exact
  /// equispaced grid.
  static Grid from_points(std::span<const double> points,
                          double tolerance = 1e-9) {
    const auto n = static_cast<Index>(points.size());
    Grid g = equispaced(n);
    for (Index i = 0; i < n; ++i) {
      if (!std::isfinite(points[i]) ||
          std::abs(points[i] - g.points_[i]) > tolerance) {
        throw DatasetError("grid point " + std::to_string(i) + " (" +
                           std::to_string(points[i]) +
                           ") is not on the equispaced grid over [0,1]");
      }
    }
    return g;
  }

  Index size() const noexcept { return points_.size(); }
  double operator[](Index i) const { return points_[i]; }
  const Vector& points() const noexcept { return points_; }
  double spacing() const { return 1.0 / static_cast<double>(size() - 1); }

  bool operator==(const Grid& other) const {
    return points_.size() == other.points_.size() &&
           points_ == other.points_;
  }

 private:
  Vector points_;
};

/// Set O of observed target grid indices; the complement is M.
class ObservationPattern {
 public:
  ObservationPattern() = default;
  explicit ObservationPattern(std::vector<bool> observed)
      : observed_(std::move(observed)) {}

  static ObservationPattern all_observed(Index n) {
    return ObservationPattern(std::vector<bool>(static_cast<size_t>(n), true));
  }

  /// Observed on [0, upper]: grid points u_i <= upper (closed interval).
  static ObservationPattern observed_up_to(const Grid& grid, double upper) {
    std::vector<bool> bits(static_cast<size_t>(grid.size()));
    for (Index i = 0; i < grid.size(); ++i) {
      bits[static_cast<size_t>(i)] = grid[i] <= upper;
    }
    return ObservationPattern(std::move(bits));
  }

  Index size() const noexcept { return static_cast<Index>(observed_.size()); }
  bool observed(Index i) const { return observed_[static_cast<size_t>(i)]; }
  bool missing(Index i) const { return !observed(i); }

  Index n_observed_target() const {
    return static_cast<Index>(
        std::count(observed_.begin(), observed_.end(), true));
  }
  Index n_missing() const { return size() - n_observed_target(); }
  bool complete() const { return n_missing() == 0; }

  std::vector<Index> observed_indices() const { return indices_where(true); }
  std::vector<Index> missing_indices() const { return indices_where(false); }

  /// '1'/'0' string, one character per grid index.
  std::string key() const {
    std::string s(observed_.size(), '0');
    for (size_t i = 0; i < observed_.size(); ++i) {
      if (observed_[i]) s[i] = '1';
    }
    return s;
  }

  const std::vector<bool>& bits() const noexcept { return observed_; }

  bool operator==(const ObservationPattern&) const = default;

 private:
  std::vector<Index> indices_where(bool value) const {
    std::vector<Index> out;
    for (size_t i = 0; i < observed_.size(); ++i) {
      if (observed_[i] == value) out.push_back(static_cast<Index>(i));
    }
    return out;
  }

  std::vector<bool> observed_;
};

/// T curves on a common grid. Missing target cells are flagged in `mask`
/// and stored as 0 in `target`, so arithmetic never meets a NaN.
class FunctionalDataset {
 public:
  FunctionalDataset(Grid grid, Matrix target, Mask mask,
                    std::vector<Matrix> covariates = {})
      : grid_(std::move(grid)),
        target_(std::move(target)),
        mask_(std::move(mask)),
        covariates_(std::move(covariates)) {
    validate();
  }

  /// Fully observed target.
  FunctionalDataset(Grid grid, Matrix target,
                    std::vector<Matrix> covariates = {})
      : FunctionalDataset(std::move(grid), target,
                          Mask::Constant(target.rows(), target.cols(), true),
                          std::move(covariates)) {}

  const Grid& grid() const noexcept { return grid_; }
  const Matrix& target() const noexcept { return target_; }
  const Mask& mask() const noexcept { return mask_; }
  const std::vector<Matrix>& covariates() const noexcept {
    return covariates_;
  }
  const Matrix& covariate(Index d) const {
    return covariates_.at(static_cast<size_t>(d));
  }

  Index n_curves() const noexcept { return target_.rows(); }
  Index n_points() const noexcept { return target_.cols(); }
  Index n_covariates() const noexcept {
    return static_cast<Index>(covariates_.size());
  }
  Index n_channels() const noexcept { return n_covariates() + 1; }

  bool is_complete(Index curve) const { return mask_.row(curve).all(); }

  /// Channel 0 is the target, channels 1..D the covariates.
  const Matrix& channel(Index d) const {
    return d == 0 ? target_ : covariate(d - 1);
  }

  FunctionalDataset without_covariates() const {
    return FunctionalDataset(grid_, target_, mask_, {});
  }

  FunctionalDataset select_rows(std::span<const Index> rows) const {
    const auto n = static_cast<Index>(rows.size());
    Matrix target(n, n_points());
    Mask mask(n, n_points());
    std::vector<Matrix> covs(covariates_.size(), Matrix(n, n_points()));
    for (Index r = 0; r < n; ++r) {
      target.row(r) = target_.row(rows[r]);
      mask.row(r) = mask_.row(rows[r]);
      for (size_t d = 0; d < covs.size(); ++d) {
        covs[d].row(r) = covariates_[d].row(rows[r]);
      }
    }
    return FunctionalDataset(grid_, std::move(target), std::move(mask),
                             std::move(covs));
  }

 private:
  void validate() {
    const Index t = target_.rows();
    const Index n = target_.cols();
    if (t < 2 || n < 2) {
      throw DatasetError("dataset needs T >= 2 curves and N >= 2 grid points, "
                         "got " + std::to_string(t) + "x" + std::to_string(n));
    }
    if (grid_.size() != n) {
      throw DatasetError("grid has " + std::to_string(grid_.size()) +
                         " points but data has " + std::to_string(n) +
                         " columns");
    }
    if (mask_.rows() != t || mask_.cols() != n) {
      throw DatasetError("mask shape does not match target shape");
    }
    for (Index r = 0; r < t; ++r) {
      for (Index c = 0; c < n; ++c) {
        if (!mask_(r, c)) {
          target_(r, c) = 0.0;
        } else if (!std::isfinite(target_(r, c))) {
          throw DatasetError("non-finite observed target value at (" +
                             std::to_string(r) + "," + std::to_string(c) +
                             ")");
        }
      }
    }
    for (size_t d = 0; d < covariates_.size(); ++d) {
      const Matrix& cov = covariates_[d];
      if (cov.rows() != t || cov.cols() != n) {
        throw DatasetError("covariate " + std::to_string(d + 1) +
                           " shape does not match target shape");
      }
      if (!cov.allFinite()) {
        throw DatasetError("covariate " + std::to_string(d + 1) +
                           " contains missing or non-finite cells");
      }
    }
  }

  Grid grid_;
  Matrix target_;
  Mask mask_;
  std::vector<Matrix> covariates_;
};

/// Rows of `second` appended below `first`; grids and channel counts must
/// agree.
inline FunctionalDataset concatenate(const FunctionalDataset& first,
                                     const FunctionalDataset& second) {
  if (!(first.grid() == second.grid()) ||
      first.n_covariates() != second.n_covariates()) {
    throw DatasetError("cannot concatenate datasets with different grids or "
                       "channel counts");
  }
  const Index t = first.n_curves() + second.n_curves();
  const Index n = first.n_points();
  Matrix target(t, n);
  target << first.target(), second.target();
  Mask mask(t, n);
  mask << first.mask(), second.mask();
  std::vector<Matrix> covs;
  for (Index d = 0; d < first.n_covariates(); ++d) {
    Matrix c(t, n);
    c << first.covariate(d), second.covariate(d);
    covs.push_back(std::move(c));
  }
  return FunctionalDataset(first.grid(), std::move(target), std::move(mask),
                           std::move(covs));
}

/// Location of a stacked column: channel d (0 = target) and grid index i.
struct StackedColumn {
  Index channel = 0;
  Index grid_index = 0;
  bool operator==(const StackedColumn&) const = default;
};

/// Row-stacked measurement matrices over a set of complete curves.
///
/// `y_complete` has (D+1)N columns laid out channel by channel; column
/// d*N + i holds channel d at grid index i. `y_observed` keeps the target
/// columns with pattern.observed(i) followed by every covariate column.
/// Each channel block is scaled by sqrt(w_d).
struct StackedMatrices {
  std::vector<Index> rows;
  Matrix y_complete;
  Matrix y_observed;
  std::vector<StackedColumn> column_map;
  ObservationPattern pattern;
  std::vector<double> weights;
  Index n_points = 0;

  Index n_rows() const { return y_complete.rows(); }
  Index n_observed_columns() const { return y_observed.cols(); }
  static Index complete_column(Index channel, Index grid_index, Index n) {
    return channel * n + grid_index;
  }
  /// Weighted target block of y_complete (the columns y_{c,i}, i = 1..N).
  auto target_block() const { return y_complete.leftCols(n_points); }
};

/// Sorted indices of curves whose target is observed at every grid point.
inline std::vector<Index> complete_indices(const FunctionalDataset& dataset) {
  std::vector<Index> out;
  for (Index t = 0; t < dataset.n_curves(); ++t) {
    if (dataset.is_complete(t)) out.push_back(t);
  }
  if (out.size() < 2) {
    throw DatasetError("need at least 2 completely observed curves, found " +
                       std::to_string(out.size()));
  }
  return out;
}

inline ObservationPattern pattern_of(const FunctionalDataset& dataset,
                                     Index curve) {
  if (curve < 0 || curve >= dataset.n_curves()) {
    throw DatasetError("curve index " + std::to_string(curve) +
                       " out of range");
  }
  std::vector<bool> bits(static_cast<size_t>(dataset.n_points()));
  for (Index i = 0; i < dataset.n_points(); ++i) {
    bits[static_cast<size_t>(i)] = dataset.mask()(curve, i);
  }
  return ObservationPattern(std::move(bits));
}

inline void validate_weights(const FunctionalDataset& dataset,
                             std::span<const double> weights) {
  if (static_cast<Index>(weights.size()) != dataset.n_channels()) {
    throw DatasetError("expected " + std::to_string(dataset.n_channels()) +
                       " channel weights, got " +
                       std::to_string(weights.size()));
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw DatasetError("channel weights must be finite and positive");
    }
  }
}

inline std::vector<double> unit_weights(const FunctionalDataset& dataset) {
  return std::vector<double>(static_cast<size_t>(dataset.n_channels()), 1.0);
}

inline void validate_pattern(const FunctionalDataset& dataset,
                             const ObservationPattern& pattern) {
  if (pattern.size() != dataset.n_points()) {
    throw DatasetError("pattern length " + std::to_string(pattern.size()) +
                       " does not match grid size " +
                       std::to_string(dataset.n_points()));
  }
  if (pattern.n_observed_target() == 0 && dataset.n_covariates() == 0) {
    throw DatasetError("empty observation set requires at least one "
                       "covariate");
  }
}

/// Column map of y_observed for a pattern: observed target indices, then
/// every covariate channel in order.
inline std::vector<StackedColumn> observed_column_map(
    const ObservationPattern& pattern, Index n_covariates) {
  std::vector<StackedColumn> map;
  const Index n = pattern.size();
  for (Index i = 0; i < n; ++i) {
    if (pattern.observed(i)) map.push_back({0, i});
  }
  for (Index d = 1; d <= n_covariates; ++d) {
    for (Index i = 0; i < n; ++i) map.push_back({d, i});
  }
  return map;
}

/// Stacked, weighted measurements of one curve restricted to `pattern`
/// (the row vector y_{O,s}). The target must be observed wherever the
/// pattern says so.
inline RowVector stack_observed(const FunctionalDataset& dataset, Index curve,
                                const ObservationPattern& pattern,
                                std::span<const double> weights) {
  validate_pattern(dataset, pattern);
  validate_weights(dataset, weights);
  const auto map = observed_column_map(pattern, dataset.n_covariates());
  RowVector out(static_cast<Index>(map.size()));
  for (size_t c = 0; c < map.size(); ++c) {
    const auto [d, i] = map[c];
    if (d == 0 && !dataset.mask()(curve, i)) {
      throw DatasetError("curve " + std::to_string(curve) +
                         " is not observed at grid index " +
                         std::to_string(i) + " required by the pattern");
    }
    out[static_cast<Index>(c)] =
        std::sqrt(weights[static_cast<size_t>(d)]) * dataset.channel(d)(curve, i);
  }
  return out;
}

/// Builds Y_C and Y_O over an explicit set of complete rows.
inline StackedMatrices assemble_rows(const FunctionalDataset& dataset,
                                     std::span<const Index> rows,
                                     const ObservationPattern& pattern,
                                     std::span<const double> weights) {
  validate_pattern(dataset, pattern);
  validate_weights(dataset, weights);
  if (rows.size() < 2) {
    throw DatasetError("factor estimation needs at least 2 complete curves, "
                       "got " + std::to_string(rows.size()));
  }
  const Index n = dataset.n_points();
  const Index channels = dataset.n_channels();
  const auto t_c = static_cast<Index>(rows.size());

  StackedMatrices out;
  out.rows.assign(rows.begin(), rows.end());
  out.pattern = pattern;
  out.weights.assign(weights.begin(), weights.end());
  out.n_points = n;
  out.column_map = observed_column_map(pattern, dataset.n_covariates());

  out.y_complete.resize(t_c, channels * n);
  for (Index r = 0; r < t_c; ++r) {
    const Index t = rows[static_cast<size_t>(r)];
    if (!dataset.is_complete(t)) {
      throw DatasetError("curve " + std::to_string(t) +
                         " is not completely observed");
    }
  }
  for (Index d = 0; d < channels; ++d) {
    const double scale = std::sqrt(weights[static_cast<size_t>(d)]);
    const Matrix& src = dataset.channel(d);
    for (Index r = 0; r < t_c; ++r) {
      out.y_complete.row(r).segment(d * n, n) =
          scale * src.row(rows[static_cast<size_t>(r)]);
    }
  }

  out.y_observed.resize(t_c, static_cast<Index>(out.column_map.size()));
  for (size_t c = 0; c < out.column_map.size(); ++c) {
    const auto [d, i] = out.column_map[c];
    out.y_observed.col(static_cast<Index>(c)) =
        out.y_complete.col(StackedMatrices::complete_column(d, i, n));
  }
  return out;
}

/// Builds Y_C and Y_O over the complete subsample of `dataset`.
inline StackedMatrices assemble(const FunctionalDataset& dataset,
                                const ObservationPattern& pattern,
                                std::span<const double> weights) {
  const auto rows = complete_indices(dataset);
  return assemble_rows(dataset, rows, pattern, weights);
}

}  // namespace fdrecon
