#pragma once

// Channel weights and K-fold cross-validated choice of the factor rank.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fdrecon/core_model.hpp"
#include "fdrecon/error.hpp"
#include "fdrecon/factor_recon.hpp"
#include "fdrecon/linalg.hpp"
#include "fdrecon/random.hpp"

namespace fdrecon {

/// Positive weights w_0 (target), w_1..w_D (covariates).
class WeightVector {
 public:
  explicit WeightVector(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) throw DatasetError("weight vector is empty");
    for (double x : w_) {
      if (!(x > 0.0) || !std::isfinite(x)) {
        throw DatasetError("weights must be finite and positive");
      }
    }
  }

  std::span<const double> values() const noexcept { return w_; }
  const std::vector<double>& vector() const noexcept { return w_; }
  double operator[](size_t d) const { return w_.at(d); }
  size_t size() const noexcept { return w_.size(); }

 private:
  std::vector<double> w_;
};

/// Trapezoid rule on the grid.
inline double trapezoid(const Vector& values, const Grid& grid) {
  double acc = 0.0;
  for (Index i = 0; i + 1 < grid.size(); ++i) {
    acc += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
  }
  return acc;
}

/// w_d = 1 / integral of the pointwise sample variance (denominator T_C - 1)
/// of channel d over the complete curves. After scaling by sqrt(w_d) every
/// channel has unit integrated variance.
inline WeightVector empirical_weights(const FunctionalDataset& dataset) {
  const auto rows = complete_indices(dataset);
  const auto t_c = static_cast<double>(rows.size());
  std::vector<double> w;
  for (Index d = 0; d < dataset.n_channels(); ++d) {
    const Matrix& ch = dataset.channel(d);
    Vector mean = Vector::Zero(dataset.n_points());
    for (Index t : rows) mean += ch.row(t).transpose();
    mean /= t_c;
    Vector var = Vector::Zero(dataset.n_points());
    for (Index t : rows) {
      var += (ch.row(t).transpose() - mean).array().square().matrix();
    }
    var /= (t_c - 1.0);
    const double integral = trapezoid(var, dataset.grid());
    if (!(integral >= 1e-12)) {
      throw DegenerateError("channel " + std::to_string(d) +
                            " has (near) zero integrated variance");
    }
    w.push_back(1.0 / integral);
  }
  return WeightVector(std::move(w));
}

enum class FoldScheme { kShuffled, kContiguous };

struct CVReport {
  std::vector<double> sse_per_rank;  // entry r-1 holds SSE(r)
  Index chosen_rank = 0;
  Index folds = 0;
  Index r_max = 0;
  std::vector<Index> complete_curves;  // the set T, ascending
  std::vector<Index> fold_assignment;  // fold label of complete_curves[j]
  std::uint64_t seed = 0;
};

/// min(20, T_C - ceil(T_C/K) - 1, N_O - 1), at least 1.
inline Index default_r_max(Index t_complete, Index folds, Index n_observed_cols) {
  const Index largest_fold = (t_complete + folds - 1) / folds;
  const Index cap = std::min<Index>(
      {20, t_complete - largest_fold - 1, n_observed_cols - 1});
  return std::max<Index>(cap, 1);
}

inline Index observed_column_count(const FunctionalDataset& dataset,
                                   const ObservationPattern& pattern) {
  return pattern.n_observed_target() + dataset.n_covariates() * dataset.n_points();
}

/// Fold label for each complete curve (in ascending curve order).
inline std::vector<Index> assign_folds(Index t_complete, Index folds,
                                       std::uint64_t seed,
                                       FoldScheme scheme = FoldScheme::kShuffled) {
  std::vector<Index> order(static_cast<size_t>(t_complete));
  for (Index j = 0; j < t_complete; ++j) order[static_cast<size_t>(j)] = j;
  if (scheme == FoldScheme::kShuffled) {
    rng::shuffle(std::span<Index>(order), seed, rng::kFolds);
  }
  std::vector<Index> labels(static_cast<size_t>(t_complete));
  const Index base = t_complete / folds;
  const Index extra = t_complete % folds;
  Index pos = 0;
  for (Index f = 0; f < folds; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    for (Index j = 0; j < size; ++j, ++pos) {
      labels[static_cast<size_t>(order[static_cast<size_t>(pos)])] = f;
    }
  }
  return labels;
}

struct CVOptions {
  Index r_max = 0;  // 0 selects default_r_max
  Index folds = 5;
  std::uint64_t seed = 0;
  FoldScheme scheme = FoldScheme::kShuffled;
  FitOptions fit;
};

/// K-fold cross-validation of the rank for pattern O.
///
/// Each held-out complete curve is masked to O, reconstructed from the
/// training folds, and compared with its raw measurements on M. One SVD per
/// fold at rank r_max serves every r <= r_max since truncations are nested
/// and the factor columns are orthogonal. Components whose singular value is
/// clamped to zero contribute nothing, so SSE is flat beyond the numerical
/// rank. Ties (within 1e-10 of the held-out energy on M) go to the smaller
/// rank.
inline CVReport cv_rank(const FunctionalDataset& dataset,
                        const ObservationPattern& pattern,
                        std::span<const double> weights,
                        const CVOptions& options = {}) {
  validate_pattern(dataset, pattern);
  validate_weights(dataset, weights);
  const auto complete = complete_indices(dataset);
  const auto t_c = static_cast<Index>(complete.size());
  const Index k = options.folds;
  if (k < 2) throw FoldError("need at least 2 folds, got " + std::to_string(k));
  if (t_c < k) {
    throw FoldError("only " + std::to_string(t_c) +
                    " complete curves for " + std::to_string(k) + " folds");
  }
  const Index n_o = observed_column_count(dataset, pattern);
  const Index r_max =
      options.r_max > 0 ? options.r_max : default_r_max(t_c, k, n_o);

  CVReport report;
  report.folds = k;
  report.r_max = r_max;
  report.seed = options.seed;
  report.complete_curves = complete;
  report.fold_assignment = assign_folds(t_c, k, options.seed, options.scheme);

  std::vector<std::vector<Index>> members(static_cast<size_t>(k));
  for (Index j = 0; j < t_c; ++j) {
    members[static_cast<size_t>(report.fold_assignment[static_cast<size_t>(j)])]
        .push_back(complete[static_cast<size_t>(j)]);
  }
  Index smallest_train = t_c;
  for (const auto& m : members) {
    if (m.empty()) throw FoldError("empty fold");
    smallest_train = std::min(smallest_train, t_c - static_cast<Index>(m.size()));
  }
  if (r_max < 1 || r_max > std::min(smallest_train, n_o)) {
    throw RankError("r_max = " + std::to_string(r_max) +
                    " exceeds min(T_C - |fold|, N_O) = " +
                    std::to_string(std::min(smallest_train, n_o)));
  }

  const auto missing = pattern.missing_indices();
  const double unweight = 1.0 / std::sqrt(weights[0]);
  const double root_n = std::sqrt(static_cast<double>(dataset.n_points()));
  std::vector<double> sse(static_cast<size_t>(r_max), 0.0);
  double energy = 0.0;

  for (Index f = 0; f < k; ++f) {
    std::vector<Index> train;
    for (Index j = 0; j < t_c; ++j) {
      if (report.fold_assignment[static_cast<size_t>(j)] != f) {
        train.push_back(complete[static_cast<size_t>(j)]);
      }
    }
    const StackedMatrices stacked =
        assemble_rows(dataset, train, pattern, weights);
    const FactorFit fit = fit_factors(stacked, r_max, options.fit);
    const Matrix coef = regression_coefficients(fit, stacked);
    const Vector& d = fit.svd.d;
    const double floor = linalg::kClampRatio * d[0];

    for (Index s : members[static_cast<size_t>(f)]) {
      const RowVector y = stack_observed(dataset, s, pattern, weights);
      const RowVector proj = (y - fit.observed_mean) * fit.svd.v / root_n;
      Vector recon(static_cast<Index>(missing.size()));
      for (size_t j = 0; j < missing.size(); ++j) {
        recon[static_cast<Index>(j)] = unweight * fit.target_mean[missing[j]];
      }
      for (Index r = 0; r < r_max; ++r) {
        if (d[r] > floor) {
          const double score = proj[r] / d[r];
          for (size_t j = 0; j < missing.size(); ++j) {
            recon[static_cast<Index>(j)] +=
                unweight * score * coef(r, missing[j]);
          }
        }
        double acc = 0.0;
        for (size_t j = 0; j < missing.size(); ++j) {
          const double e =
              recon[static_cast<Index>(j)] - dataset.target()(s, missing[j]);
          acc += e * e;
        }
        sse[static_cast<size_t>(r)] += acc;
      }
      for (Index i : missing) {
        energy += dataset.target()(s, i) * dataset.target()(s, i);
      }
    }
  }

  report.sse_per_rank = sse;
  const double best = *std::min_element(sse.begin(), sse.end());
  const double tie = best + 1e-10 * energy;
  for (Index r = 0; r < r_max; ++r) {
    if (sse[static_cast<size_t>(r)] <= tie) {
      report.chosen_rank = r + 1;
      break;
    }
  }
  return report;
}

}  // namespace fdrecon
