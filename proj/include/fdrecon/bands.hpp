#pragma once

// Simultaneous prediction bands on the missing set M:
//
//   center(u) +/- q_alpha * omega(u),   u in M,
//
// where omega is the pointwise sd of the reconstruction residuals
// Z_t = X~_t - L(X_t^O) over the complete curves (X~_t a smoothing-spline
// fit), and q_alpha is the empirical (1 - alpha)-quantile of the
// standardized suprema zeta_t = sup_M |Z_t| / omega.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fdrecon/core_model.hpp"
#include "fdrecon/error.hpp"
#include "fdrecon/factor_recon.hpp"
#include "fdrecon/smoothing_spline.hpp"

namespace fdrecon {

inline constexpr double kOmegaFloor = 1e-8;

/// Smoothing-spline fit (GCV over the fixed ladder) of one complete curve.
inline Vector smooth_complete(const Vector& curve_values, const Grid& grid) {
  return spline::smooth_gcv(curve_values, grid).fitted;
}

/// Smoothed target rows for every complete curve; other rows are left zero.
inline Matrix smooth_complete_curves(const FunctionalDataset& dataset) {
  Matrix out = Matrix::Zero(dataset.n_curves(), dataset.n_points());
  for (Index t : complete_indices(dataset)) {
    out.row(t) =
        smooth_complete(dataset.target().row(t).transpose(), dataset.grid())
            .transpose();
  }
  return out;
}

struct ResidualScale {
  Vector omega_hat;  // per missing index, floored at kOmegaFloor
  Vector z_bar;
};

/// Population-style (1/T_C) sd and mean of residual rows (T_C x |M|).
inline ResidualScale residual_scale(const Matrix& residuals) {
  const Index t_c = residuals.rows();
  if (t_c < 3) {
    throw DegenerateError("band residual scale needs T_C >= 3, got " +
                              std::to_string(t_c),
                          "bands");
  }
  ResidualScale out;
  out.z_bar = residuals.colwise().mean().transpose();
  out.omega_hat.resize(residuals.cols());
  for (Index j = 0; j < residuals.cols(); ++j) {
    const double var =
        (residuals.col(j).array() - out.z_bar[j]).square().sum() /
        static_cast<double>(t_c);
    out.omega_hat[j] = std::max(std::sqrt(var), kOmegaFloor);
  }
  return out;
}

/// Order statistic at 1-based position ceil((1 - alpha) n).
inline double empirical_quantile(std::span<const double> samples, double alpha) {
  if (samples.empty()) throw DomainError("empirical quantile of no samples");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("alpha must lie in (0,1)");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // The small offset keeps e.g. (1 - 0.05) * 100 from rounding up to 96.
  auto k = static_cast<Index>(std::ceil((1.0 - alpha) * n - 1e-9));
  k = std::clamp<Index>(k, 1, static_cast<Index>(sorted.size()));
  return sorted[static_cast<size_t>(k - 1)];
}

struct BandOptions {
  // Exclude curve t from the factor fit used to residualize it.
  bool leave_one_out = true;
};

/// Pattern-level band statistics, shared by every curve with that pattern.
struct BandModel {
  ObservationPattern pattern;
  std::vector<Index> missing;
  Index rank = 0;
  Vector omega_hat;
  Vector z_bar;
  std::vector<double> zeta_samples;

  double q_alpha(double alpha) const {
    return empirical_quantile(zeta_samples, alpha);
  }
};

struct PredictionBand {
  std::vector<Index> missing;
  Vector center;
  Vector lower;
  Vector upper;
  double q_alpha_hat = 0.0;
  double alpha = 0.0;
  Vector omega_hat;

  /// True when every value of `truth` (full grid) on M lies in the band.
  bool covers(const Vector& truth) const {
    for (size_t j = 0; j < missing.size(); ++j) {
      const double x = truth[missing[j]];
      const auto jj = static_cast<Index>(j);
      if (x < lower[jj] || x > upper[jj]) return false;
    }
    return true;
  }
};

/// Residualizes every complete curve under `pattern` and estimates omega,
/// Z-bar and the zeta_t samples. `smoothed` holds X~_t in the rows of the
/// complete curves (see smooth_complete_curves).
inline BandModel fit_band_model(const FunctionalDataset& dataset,
                                const ObservationPattern& pattern, Index rank,
                                std::span<const double> weights,
                                const Matrix& smoothed,
                                const BandOptions& options = {}) {
  const auto complete = complete_indices(dataset);
  const auto t_c = static_cast<Index>(complete.size());
  if (t_c < 3) {
    throw DegenerateError("prediction bands need T_C >= 3", "bands");
  }
  BandModel model;
  model.pattern = pattern;
  model.missing = pattern.missing_indices();
  model.rank = rank;
  const auto m = static_cast<Index>(model.missing.size());

  Matrix residuals(t_c, m);
  std::shared_ptr<const Reconstructor> shared;
  if (!options.leave_one_out) {
    shared = reconstructor_for(dataset, pattern, rank, weights);
  }
  std::vector<Index> train;
  train.reserve(complete.size());
  for (Index j = 0; j < t_c; ++j) {
    const Index t = complete[static_cast<size_t>(j)];
    Vector values;
    const RowVector y = stack_observed(dataset, t, pattern, weights);
    if (options.leave_one_out) {
      train.clear();
      for (Index other : complete) {
        if (other != t) train.push_back(other);
      }
      const StackedMatrices stacked =
          assemble_rows(dataset, train, pattern, weights);
      values = Reconstructor(fit_factors(stacked, rank), stacked).apply(y);
    } else {
      values = shared->apply(y);
    }
    for (Index i = 0; i < m; ++i) {
      const Index g = model.missing[static_cast<size_t>(i)];
      residuals(j, i) = smoothed(t, g) - values[g];
    }
  }

  if (m == 0) {
    model.zeta_samples.assign(static_cast<size_t>(t_c), 0.0);
    return model;
  }
  const ResidualScale scale = residual_scale(residuals);
  model.omega_hat = scale.omega_hat;
  model.z_bar = scale.z_bar;
  model.zeta_samples.resize(static_cast<size_t>(t_c));
  for (Index j = 0; j < t_c; ++j) {
    model.zeta_samples[static_cast<size_t>(j)] =
        (residuals.row(j).transpose().array().abs() / model.omega_hat.array())
            .maxCoeff();
  }
  return model;
}

/// Band around a full-grid reconstruction `center` of a curve sharing the
/// model's pattern.
inline PredictionBand make_band(const Vector& center, const BandModel& model,
                                double alpha) {
  PredictionBand band;
  band.alpha = alpha;
  band.missing = model.missing;
  band.q_alpha_hat = model.q_alpha(alpha);
  band.omega_hat = model.omega_hat;
  const auto m = static_cast<Index>(model.missing.size());
  band.center.resize(m);
  band.lower.resize(m);
  band.upper.resize(m);
  for (Index j = 0; j < m; ++j) {
    const double c = center[model.missing[static_cast<size_t>(j)]];
    const double half = band.q_alpha_hat * model.omega_hat[j];
    band.center[j] = c;
    band.lower[j] = c - half;
    band.upper[j] = c + half;
  }
  return band;
}

/// Reconstruction of curve s with its simultaneous band on M.
inline PredictionBand build_band(const FunctionalDataset& dataset, Index curve,
                                 Index rank, double alpha,
                                 std::span<const double> weights,
                                 const BandOptions& options = {}) {
  const ObservationPattern pattern = pattern_of(dataset, curve);
  const Matrix smoothed = smooth_complete_curves(dataset);
  const BandModel model =
      fit_band_model(dataset, pattern, rank, weights, smoothed, options);
  const Reconstruction recon = reconstruct(dataset, curve, rank, weights);
  return make_band(recon.grid_values, model, alpha);
}

}  // namespace fdrecon
