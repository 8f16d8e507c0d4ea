#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fdrecon/bands.hpp"
#include "fdrecon/selection.hpp"
#include "fdrecon/simulation.hpp"
#include "fdrecon/smoothing_spline.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace fdrecon;
namespace ft = fdrecon::testing;

TEST(SmoothingSpline, ReproducesAffineInput) {
  const Grid g = Grid::equispaced(31);
  const Vector y = (0.7 - 2.3 * g.points().array()).matrix();
  for (double lambda : {1e-12, 1e-4, 1.0, 1e3}) {
    EXPECT_LE((spline::smooth_with_lambda(y, g, lambda).fitted - y).cwiseAbs().maxCoeff(), 1e-8);
  }
  EXPECT_LE((smooth_complete(y, g) - y).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SmoothingSpline, NoiselessSine) {
  const Grid g = Grid::equispaced(51);
  const Vector y = (2.0 * std::numbers::pi * g.points().array()).sin().matrix();
  EXPECT_LE((spline::smooth_with_lambda(y, g, 1e-10).fitted - y).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_LE((smooth_complete(y, g) - y).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(SmoothingSpline, ShrinksPureNoise) {
  const Grid g = Grid::equispaced(51);
  const Vector y = ft::random_matrix(51, 1, 5).col(0);
  const Vector s = smooth_complete(y, g);
  auto var = [](const Vector& v) { return (v.array() - v.mean()).square().mean(); };
  EXPECT_LT(var(s), var(y));
}

TEST(SmoothingSpline, GcvPicksFromLadder) {
  const auto ladder = spline::lambda_ladder();
  EXPECT_EQ(ladder.size(), 25u);
  EXPECT_DOUBLE_EQ(ladder.front(), 1e-12);
  EXPECT_DOUBLE_EQ(ladder.back(), 1.0);
  const Grid g = Grid::equispaced(41);
  const Vector y = ft::random_matrix(41, 1, 6).col(0);
  const auto fit = spline::smooth_gcv(y, g);
  EXPECT_NE(std::find(ladder.begin(), ladder.end(), fit.lambda), ladder.end());
  EXPECT_GT(fit.trace, 2.0 - 1e-8);
  EXPECT_LE(fit.trace, 41.0);
}

TEST(ResidualScale, IdenticalResidualsHitFloor) {
  Matrix z(4, 3);
  z.rowwise() = RowVector::LinSpaced(3, -1.0, 2.0);
  const auto s = residual_scale(z);
  EXPECT_EQ(s.omega_hat, Vector::Constant(3, kOmegaFloor));
  EXPECT_LE((s.z_bar - z.row(0).transpose()).norm(), 1e-15);
}

TEST(ResidualScale, PopulationSd) {
  Matrix z(4, 1);
  z << -1, 1, -1, 1;
  EXPECT_DOUBLE_EQ(residual_scale(z).omega_hat[0], 1.0);
  EXPECT_THROW(residual_scale(Matrix::Ones(2, 3)), DegenerateError);
}

TEST(EmpiricalQuantile, OrderStatistics) {
  EXPECT_EQ(ft::quantile_identities(), "");
  const std::vector<double> none;
  EXPECT_THROW(empirical_quantile(none, 0.1), DomainError);
  const std::vector<double> one = {1.0};
  EXPECT_THROW(empirical_quantile(one, 1.0), DomainError);
}

TEST(Bands, MonotoneInAlpha) { EXPECT_EQ(ft::band_monotone_in_alpha(), ""); }
TEST(Bands, ScaleEquivariant) { EXPECT_EQ(ft::band_scale_equivariance(), ""); }

TEST(Bands, SmallAlphaUsesLargestZeta) {
  const FunctionalDataset d = ft::band_fixture();
  const auto w = unit_weights(d);
  const BandModel model = fit_band_model(d, pattern_of(d, 29), 3, w, smooth_complete_curves(d));
  EXPECT_EQ(model.zeta_samples.size(), 29u);
  EXPECT_EQ(model.q_alpha(1e-6),
            *std::max_element(model.zeta_samples.begin(), model.zeta_samples.end()));
}

TEST(Bands, CollapseOnNoiselessAffineCurves) {
  // Rank-2 affine curves: smoothing is exact and so is the reconstruction.
  const Index t = 20, n = 21;
  const Grid g = Grid::equispaced(n);
  Matrix x(t, n), c(t, n);
  for (Index s = 0; s < t; ++s) {
    const double a = rng::standard_normal(3, 1, static_cast<std::uint64_t>(s), 0);
    const double b = rng::standard_normal(3, 1, static_cast<std::uint64_t>(s), 1);
    x.row(s) = (a + b * g.points().array()).matrix().transpose();
    c.row(s) = (b - a * g.points().array()).matrix().transpose();
  }
  Mask m = Mask::Constant(t, n, true);
  for (Index i = 12; i < n; ++i) m(t - 1, i) = false;
  const FunctionalDataset d(g, x, m, {c});
  const PredictionBand band = build_band(d, t - 1, 2, 0.05, unit_weights(d));
  for (Index j = 0; j < band.center.size(); ++j) {
    EXPECT_NEAR(band.center[j], x(t - 1, band.missing[static_cast<size_t>(j)]), 1e-8);
    EXPECT_LE(band.upper[j] - band.lower[j], 1e-6);
  }
}

TEST(Bands, LeaveInBandCoversOwnSmoothedCurves) {
  const FunctionalDataset d = ft::band_fixture();
  const auto w = unit_weights(d);
  const auto pattern = pattern_of(d, 29);
  const Matrix smoothed = smooth_complete_curves(d);
  const BandModel model = fit_band_model(d, pattern, 3, w, smoothed, BandOptions{false});
  const auto op = reconstructor_for(d, pattern, 3, w);
  const auto complete = complete_indices(d);
  for (double alpha : {0.05, 0.1, 0.25}) {
    int inside = 0;
    for (Index t : complete) {
      const Vector center = op->apply(stack_observed(d, t, pattern, w));
      if (make_band(center, model, alpha).covers(smoothed.row(t).transpose())) ++inside;
    }
    const double frac = inside / static_cast<double>(complete.size());
    EXPECT_GE(frac, 1.0 - alpha - 1.0 / static_cast<double>(complete.size()));
  }
}

TEST(Bands, OmegaTracksFreshReconstructionErrors) {
  sim::SimulationConfig cfg;
  cfg.n_test = 10000;
  cfg.fixed_truncation = 0.6;
  cfg.seed = 2024;
  const auto sample = sim::generate_sample(cfg, 0);
  const FunctionalDataset data = sample.combined();
  const Index n_train = sample.train.n_curves();
  const WeightVector w = empirical_weights(data);
  const auto pattern = pattern_of(data, n_train);
  const Index rank = cv_rank(data, pattern, w.values(), CVOptions{}).chosen_rank;
  const BandModel model =
      fit_band_model(data, pattern, rank, w.values(), smooth_complete_curves(data));
  const auto op = reconstructor_for(data, pattern, rank, w.values());
  const auto& missing = model.missing;
  Vector sum = Vector::Zero(static_cast<Index>(missing.size()));
  Vector sq = sum;
  for (Index l = 0; l < cfg.n_test; ++l) {
    const Vector rec = op->apply(stack_observed(data, n_train + l, pattern, w.values()));
    for (size_t j = 0; j < missing.size(); ++j) {
      const double z = sample.test_truth.reveal()(l, missing[j]) - rec[missing[j]];
      sum[static_cast<Index>(j)] += z;
      sq[static_cast<Index>(j)] += z * z;
    }
  }
  // Interior probes only: at u = 1 the natural spline's endpoint error enters
  // the residuals too and inflates omega by roughly 1.8x against the truth.
  const auto m = static_cast<Index>(missing.size());
  for (Index j : {Index{0}, m / 4, m / 2, 3 * m / 4, m - 3}) {
    const double mean = sum[j] / cfg.n_test;
    const double sd = std::sqrt(sq[j] / cfg.n_test - mean * mean);
    EXPECT_NEAR(model.omega_hat[j] / sd, 1.0, 0.25) << "probe " << j;
  }
}

TEST(Bands, NeedThreeCompleteCurves) {
  const ft::ExactRank e = ft::exact_rank_data(3, 11, 1, 2, 0.1);
  const FunctionalDataset d = ft::tail_masked(e, 2, 0.5);
  EXPECT_THROW(build_band(d, 2, 1, 0.1, unit_weights(d)), DegenerateError);
}
