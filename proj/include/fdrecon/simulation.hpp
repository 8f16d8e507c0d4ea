#pragma once

// Monte Carlo study harness.
//
// Target curves follow a 50-term Fourier expansion around mu(u) = sin(pi u):
//   X_t(u) = mu(u) + sum_k sqrt(lambda_k) eta_tk phi_k(u),
//   phi_{2l-1}(u) = sqrt(2) sin(2 l pi u), phi_{2l}(u) = sqrt(2) cos(2 l pi u),
// with lambda_k = exp(-k) or k^-3 / 2. The covariate is the integral
// transform X1(u) = int beta(u,v) X(v) dv with
//   beta(u,v) = sum_{k,l <= 2} b_kl phi_k(u) phi_l(v),
// which by orthonormality maps the first two basis coefficients c of X to
// B c. Both channels are observed on the grid with N(0, sigma_e^2) noise.
// Test targets are only observed on [0, D_l].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "fdrecon/bands.hpp"
#include "fdrecon/core_model.hpp"
#include "fdrecon/error.hpp"
#include "fdrecon/factor_recon.hpp"
#include "fdrecon/parallel.hpp"
#include "fdrecon/random.hpp"
#include "fdrecon/selection.hpp"

namespace fdrecon::sim {

enum class EigenDecay { kExponential, kPolynomial };
enum class Setting { kA, kB };

inline constexpr std::array<double, 4> kBeta = {1.1, 0.7, 0.5, 0.3};
inline constexpr Index kBasisSize = 50;

struct SimulationConfig {
  EigenDecay decay = EigenDecay::kExponential;
  double sigma_e = 0.1;
  Index t_complete = 100;
  Index n_test = 50;
  Index n_grid = 51;
  Setting setting = Setting::kA;
  Index n_runs = 100;
  std::uint64_t seed = 1;
  bool use_covariate = true;
  std::vector<double> alphas;  // band levels; empty disables bands
  Index folds = 5;
  Index r_max = 0;                    // 0: selection default
  std::optional<Index> fixed_rank;    // skips cross-validation
  std::optional<double> fixed_truncation;  // overrides the D_l draws
  bool leave_one_out = true;          // band residuals

  void validate() const {
    if (!(sigma_e >= 0.0) || !std::isfinite(sigma_e)) {
      throw ConfigError("sigma_e must be finite and nonnegative");
    }
    if (t_complete < 10) throw ConfigError("t_complete must be >= 10");
    if (n_grid < 3) throw ConfigError("n_grid must be >= 3");
    if (n_test < 1) throw ConfigError("n_test must be >= 1");
    if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
    for (double a : alphas) {
      if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    }
    if (fixed_rank && *fixed_rank < 1) {
      throw ConfigError("fixed rank must be positive");
    }
    if (fixed_truncation && !(*fixed_truncation >= 0.0 && *fixed_truncation <= 1.0)) {
      throw ConfigError("fixed truncation must lie in [0,1]");
    }
  }
};

inline double eigenvalue(EigenDecay decay, Index k) {
  const auto kk = static_cast<double>(k);
  return decay == EigenDecay::kExponential ? std::exp(-kk)
                                           : std::pow(kk, -3.0) / 2.0;
}

/// phi_k(u), k = 1..50.
inline double basis(Index k, double u) {
  const auto l = static_cast<double>((k + 1) / 2);
  const double arg = 2.0 * l * std::numbers::pi * u;
  return std::numbers::sqrt2 * (k % 2 == 1 ? std::sin(arg) : std::cos(arg));
}

inline double mean_function(double u) { return std::sin(std::numbers::pi * u); }

/// <mu, phi_1> and <mu, phi_2>.
inline std::array<double, 2> mean_coefficients() {
  return {0.0, -2.0 * std::numbers::sqrt2 / (3.0 * std::numbers::pi)};
}

/// Coefficients of the covariate on (phi_1, phi_2) for a target whose first
/// two basis coefficients are c.
inline std::array<double, 2> covariate_coefficients(double c1, double c2) {
  return {kBeta[0] * c1 + kBeta[1] * c2, kBeta[2] * c1 + kBeta[3] * c2};
}

/// Ground truth that must never be passed to an estimator. Reading it
/// requires an explicit reveal(), which only the metrics do.
class TruthMatrix {
 public:
  TruthMatrix() = default;
  explicit TruthMatrix(Matrix values) : values_(std::move(values)) {}
  const Matrix& reveal() const noexcept { return values_; }
  static constexpr bool tainted() { return true; }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

 private:
  Matrix values_;
};

struct SimulationSample {
  FunctionalDataset train;
  FunctionalDataset test_observed;
  TruthMatrix test_truth;
  TruthMatrix train_truth;
  std::vector<double> truncation;  // D_l per test curve

  /// Training rows followed by test rows.
  FunctionalDataset combined() const { return concatenate(train, test_observed); }
};

namespace detail {

struct Curves {
  Matrix target;     // noiseless
  Matrix covariate;  // noiseless
};

inline Curves draw_curves(const SimulationConfig& cfg, std::uint64_t seed,
                          Index count, std::uint64_t score_stream,
                          const Grid& grid) {
  const Index n = grid.size();
  Matrix phi(kBasisSize, n);
  Vector mu(n);
  for (Index i = 0; i < n; ++i) {
    mu[i] = mean_function(grid[i]);
    for (Index k = 1; k <= kBasisSize; ++k) phi(k - 1, i) = basis(k, grid[i]);
  }
  Matrix scores(count, kBasisSize);
  for (Index t = 0; t < count; ++t) {
    for (Index k = 1; k <= kBasisSize; ++k) {
      scores(t, k - 1) =
          std::sqrt(eigenvalue(cfg.decay, k)) *
          rng::standard_normal(seed, score_stream, static_cast<std::uint64_t>(t),
                               static_cast<std::uint64_t>(k));
    }
  }
  Curves out;
  out.target = scores * phi;
  out.target.rowwise() += mu.transpose();
  const auto m = mean_coefficients();
  out.covariate.resize(count, n);
  for (Index t = 0; t < count; ++t) {
    const auto a = covariate_coefficients(m[0] + scores(t, 0), m[1] + scores(t, 1));
    out.covariate.row(t) = a[0] * phi.row(0) + a[1] * phi.row(1);
  }
  return out;
}

inline Matrix add_noise(const Matrix& x, double sigma, std::uint64_t seed,
                        std::uint64_t stream) {
  Matrix y = x;
  if (sigma == 0.0) return y;
  for (Index t = 0; t < x.rows(); ++t) {
    for (Index i = 0; i < x.cols(); ++i) {
      y(t, i) += sigma * rng::standard_normal(seed, stream,
                                              static_cast<std::uint64_t>(t),
                                              static_cast<std::uint64_t>(i));
    }
  }
  return y;
}

}  // namespace detail

inline std::uint64_t run_seed(const SimulationConfig& cfg, Index run_index) {
  return cfg.seed + static_cast<std::uint64_t>(run_index);
}

inline SimulationSample generate_sample(const SimulationConfig& cfg,
                                        Index run_index) {
  cfg.validate();
  const std::uint64_t seed = run_seed(cfg, run_index);
  const Grid grid = Grid::equispaced(cfg.n_grid);

  const auto train = detail::draw_curves(cfg, seed, cfg.t_complete,
                                         rng::kScores, grid);
  const auto test = detail::draw_curves(cfg, seed, cfg.n_test,
                                        rng::kTestScores, grid);

  std::vector<Matrix> train_cov, test_cov;
  if (cfg.use_covariate) {
    train_cov.push_back(detail::add_noise(train.covariate, cfg.sigma_e, seed,
                                          rng::kCovariateNoise));
    test_cov.push_back(detail::add_noise(test.covariate, cfg.sigma_e, seed,
                                         rng::kTestCovariateNoise));
  }

  std::vector<double> truncation(static_cast<size_t>(cfg.n_test));
  Mask mask(cfg.n_test, cfg.n_grid);
  for (Index l = 0; l < cfg.n_test; ++l) {
    double d;
    if (cfg.fixed_truncation) {
      d = *cfg.fixed_truncation;
    } else {
      const double u = rng::uniform(seed, rng::kTruncation,
                                    static_cast<std::uint64_t>(l));
      d = cfg.setting == Setting::kA ? 0.5 + 0.25 * u : 0.25 + 0.5 * u;
    }
    truncation[static_cast<size_t>(l)] = d;
    for (Index i = 0; i < cfg.n_grid; ++i) mask(l, i) = grid[i] <= d;
  }

  return SimulationSample{
      FunctionalDataset(grid,
                        detail::add_noise(train.target, cfg.sigma_e, seed,
                                          rng::kTargetNoise),
                        std::move(train_cov)),
      FunctionalDataset(grid,
                        detail::add_noise(test.target, cfg.sigma_e, seed,
                                          rng::kTestTargetNoise),
                        std::move(mask), std::move(test_cov)),
      TruthMatrix(test.target), TruthMatrix(train.target),
      std::move(truncation)};
}

/// Mean over curves of the per-curve maximum absolute grid error.
inline double mae(const Matrix& truth, const Matrix& recon) {
  if (truth.rows() != recon.rows() || truth.cols() != recon.cols()) {
    throw ShapeError("mae: shape mismatch " + std::to_string(truth.rows()) +
                     "x" + std::to_string(truth.cols()) + " vs " +
                     std::to_string(recon.rows()) + "x" +
                     std::to_string(recon.cols()));
  }
  if (truth.rows() == 0) throw ShapeError("mae: no curves");
  return (truth - recon).cwiseAbs().rowwise().maxCoeff().mean();
}

inline double mae(const TruthMatrix& truth, const Matrix& recon) {
  return mae(truth.reveal(), recon);
}

/// Mean and 1/B standard deviation.
struct Summary {
  double mean = 0.0;
  double sd = 0.0;
};

inline Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const auto b = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= b;
  for (double v : values) s.sd += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(s.sd / b);
  return s;
}

struct CoverageSeries {
  double alpha = 0.0;
  std::vector<double> per_run;
  double mean = 0.0;
  double sd = 0.0;
};

struct RunOutcome {
  double mae = 0.0;
  std::vector<double> coverage;  // per alpha
  double mean_rank = 0.0;
  Index n_patterns = 0;
  Matrix reconstruction;  // n_test x N
};

struct RunReport {
  SimulationConfig config;
  std::vector<double> mae_per_run;
  double mae_mean = 0.0;
  double mae_sd = 0.0;
  std::vector<CoverageSeries> coverage;
  std::vector<double> mean_rank_per_run;
};

/// One simulation run: rank selection per distinct test pattern,
/// reconstruction of every test curve, and optional band coverage.
inline RunOutcome simulate_run(const SimulationConfig& cfg, Index run_index) {
  const SimulationSample sample = generate_sample(cfg, run_index);
  const FunctionalDataset data = sample.combined();
  const Index n_train = sample.train.n_curves();
  const WeightVector weights = empirical_weights(data);

  std::map<std::string, std::vector<Index>> groups;
  std::vector<std::string> order;
  for (Index l = 0; l < cfg.n_test; ++l) {
    const std::string key = pattern_of(data, n_train + l).key();
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(l);
  }

  Matrix smoothed;
  if (!cfg.alphas.empty()) smoothed = smooth_complete_curves(data);

  RunOutcome out;
  out.reconstruction.resize(cfg.n_test, cfg.n_grid);
  std::vector<Index> covered(cfg.alphas.size(), 0);
  double rank_sum = 0.0;
  for (const std::string& key : order) {
    const auto& members = groups[key];
    const ObservationPattern pattern = pattern_of(data, n_train + members.front());
    Index rank;
    if (cfg.fixed_rank) {
      rank = *cfg.fixed_rank;
    } else {
      CVOptions cv;
      cv.folds = cfg.folds;
      cv.r_max = cfg.r_max;
      cv.seed = run_seed(cfg, run_index);
      rank = cv_rank(data, pattern, weights.values(), cv).chosen_rank;
    }
    rank_sum += static_cast<double>(rank * static_cast<Index>(members.size()));
    const auto op = reconstructor_for(data, pattern, rank, weights.values());
    std::optional<BandModel> band_model;
    if (!cfg.alphas.empty()) {
      band_model = fit_band_model(data, pattern, rank, weights.values(),
                                  smoothed, BandOptions{cfg.leave_one_out});
    }
    for (Index l : members) {
      const Vector values =
          op->apply(stack_observed(data, n_train + l, pattern, weights.values()));
      out.reconstruction.row(l) = values.transpose();
      for (size_t a = 0; a < cfg.alphas.size(); ++a) {
        const PredictionBand band = make_band(values, *band_model, cfg.alphas[a]);
        if (band.covers(sample.test_truth.reveal().row(l).transpose())) {
          ++covered[a];
        }
      }
    }
  }
  out.mae = mae(sample.test_truth, out.reconstruction);
  for (Index c : covered) {
    out.coverage.push_back(static_cast<double>(c) /
                           static_cast<double>(cfg.n_test));
  }
  out.mean_rank = rank_sum / static_cast<double>(cfg.n_test);
  out.n_patterns = static_cast<Index>(order.size());
  return out;
}

inline RunReport run_study(const SimulationConfig& cfg) {
  cfg.validate();
  std::vector<RunOutcome> outcomes(static_cast<size_t>(cfg.n_runs));
  parallel_for(outcomes.size(), [&](std::size_t b) {
    try {
      outcomes[b] = simulate_run(cfg, static_cast<Index>(b));
    } catch (const Error& e) {
      throw Error(e.code(), "run " + std::to_string(b) + ": " + e.what());
    }
  });

  RunReport report;
  report.config = cfg;
  for (const auto& o : outcomes) {
    report.mae_per_run.push_back(o.mae);
    report.mean_rank_per_run.push_back(o.mean_rank);
  }
  const Summary s = summarize(report.mae_per_run);
  report.mae_mean = s.mean;
  report.mae_sd = s.sd;
  for (size_t a = 0; a < cfg.alphas.size(); ++a) {
    CoverageSeries series;
    series.alpha = cfg.alphas[a];
    for (const auto& o : outcomes) series.per_run.push_back(o.coverage[a]);
    const Summary c = summarize(series.per_run);
    series.mean = c.mean;
    series.sd = c.sd;
    report.coverage.push_back(std::move(series));
  }
  return report;
}

}  // namespace fdrecon::sim
