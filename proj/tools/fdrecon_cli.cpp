// fdrecon: reconstruct partially observed curves from wide CSV files, build
// simultaneous prediction bands, select ranks and run simulation studies.

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdrecon/fdrecon.hpp"

namespace {

using namespace fdrecon;
using nlohmann::json;

struct DataOptions {
  std::string target;
  std::vector<std::string> covariates;
  bool header = false;
  std::string delimiter = ",";
  std::string missing_token = "NA";
};

struct RankOptions {
  std::string rank = "cv";
  Index folds = 5;
  Index r_max = 0;
  std::string weights = "empirical";
  std::uint64_t seed = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--target", o.target, "Target CSV (rows = curves, columns = grid points)")
      ->required();
  cmd->add_option("--covariate", o.covariates,
                  "Covariate CSV with the same shape; repeat for several");
  cmd->add_flag("--header", o.header, "First row of every file holds the grid points");
  cmd->add_option("--delimiter", o.delimiter, "Field delimiter (one character)")
      ->capture_default_str();
  cmd->add_option("--missing-token", o.missing_token,
                  "Token marking a missing target cell (empty cells and NaN always do)")
      ->capture_default_str();
}

void add_rank_options(CLI::App* cmd, RankOptions& o) {
  cmd->add_option("--rank", o.rank, "Factor rank: a positive integer or 'cv'")
      ->capture_default_str();
  cmd->add_option("--folds", o.folds, "Cross-validation folds")->capture_default_str();
  cmd->add_option("--rmax", o.r_max, "Largest rank tried by cross-validation (0: default)")
      ->capture_default_str();
  cmd->add_option("--weights", o.weights,
                  "'empirical' or a comma-separated list w0,w1,...,wD")
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "Seed for the fold assignment")->capture_default_str();
}

FunctionalDataset load(const DataOptions& o) {
  if (o.delimiter.size() != 1) {
    throw ParseError("delimiter must be a single character, got '" + o.delimiter + "'");
  }
  io::DatasetFileSet files;
  files.target = o.target;
  files.covariates = o.covariates;
  files.delimiter = o.delimiter[0];
  files.grid_header = o.header;
  files.missing_token = o.missing_token;
  return io::load_dataset(files);
}

WeightVector resolve_weights(const FunctionalDataset& data, const std::string& spec) {
  if (spec == "empirical") return empirical_weights(data);
  std::vector<double> w;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    w.push_back(io::detail::parse_number(io::detail::trim(item), "--weights"));
  }
  if (static_cast<Index>(w.size()) != data.n_channels()) {
    throw DatasetError("--weights needs " + std::to_string(data.n_channels()) +
                       " values (target plus covariates), got " +
                       std::to_string(w.size()));
  }
  return WeightVector(std::move(w));
}

std::optional<Index> fixed_rank(const std::string& spec) {
  if (spec == "cv") return std::nullopt;
  Index r = 0;
  const auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), r);
  if (ec != std::errc() || ptr != spec.data() + spec.size() || r < 1) {
    throw RankError("--rank must be a positive integer or 'cv', got '" + spec + "'");
  }
  return r;
}

struct PatternGroup {
  ObservationPattern pattern;
  std::vector<Index> curves;
  Index rank = 0;
};

// Curves grouped by observation pattern, in order of first appearance.
std::vector<PatternGroup> group_patterns(const FunctionalDataset& data) {
  std::vector<PatternGroup> groups;
  std::map<std::string, size_t> index;
  for (Index t = 0; t < data.n_curves(); ++t) {
    ObservationPattern p = pattern_of(data, t);
    auto [it, inserted] = index.try_emplace(p.key(), groups.size());
    if (inserted) groups.push_back({std::move(p), {}, 0});
    groups[it->second].curves.push_back(t);
  }
  return groups;
}

Index choose_rank(const FunctionalDataset& data, const ObservationPattern& pattern,
                  const WeightVector& weights, const RankOptions& o) {
  if (auto r = fixed_rank(o.rank)) return *r;
  CVOptions cv;
  cv.folds = o.folds;
  cv.r_max = o.r_max;
  cv.seed = o.seed;
  return cv_rank(data, pattern, weights.values(), cv).chosen_rank;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    io::write_file(path, text);
  }
}

json pattern_summary(const PatternGroup& g, Index n_points) {
  return {{"n_observed", g.pattern.n_observed_target()},
          {"n_missing", g.pattern.n_missing()},
          {"complete", g.pattern.n_missing() == 0},
          {"observed", g.pattern.key()},
          {"rank", g.rank},
          {"curves", g.curves},
          {"n_points", n_points}};
}

// Shared body of `reconstruct` and `bands`.
struct ReconstructionRun {
  FunctionalDataset data;
  WeightVector weights;
  std::vector<PatternGroup> groups;
  Matrix values;  // T x N reconstructed target
};

ReconstructionRun run_reconstruction(const DataOptions& d, const RankOptions& r,
                                     bool keep_observed) {
  FunctionalDataset data = load(d);
  WeightVector weights = resolve_weights(data, r.weights);
  auto groups = group_patterns(data);
  Matrix values(data.n_curves(), data.n_points());
  PatternCache cache;
  for (auto& g : groups) {
    g.rank = choose_rank(data, g.pattern, weights, r);
    const auto op = reconstructor_for(data, g.pattern, g.rank, weights.values(), &cache);
    for (Index t : g.curves) {
      values.row(t) =
          op->apply(stack_observed(data, t, g.pattern, weights.values())).transpose();
      if (keep_observed) {
        for (Index i = 0; i < data.n_points(); ++i) {
          if (data.mask()(t, i)) values(t, i) = data.target()(t, i);
        }
      }
    }
  }
  return {std::move(data), std::move(weights), std::move(groups), std::move(values)};
}

json sidecar(const ReconstructionRun& run, const RankOptions& r, bool keep_observed) {
  json per_curve = json::array();
  std::vector<Index> rank_of(static_cast<size_t>(run.data.n_curves()));
  std::vector<size_t> group_of(static_cast<size_t>(run.data.n_curves()));
  for (size_t k = 0; k < run.groups.size(); ++k) {
    for (Index t : run.groups[k].curves) {
      rank_of[static_cast<size_t>(t)] = run.groups[k].rank;
      group_of[static_cast<size_t>(t)] = k;
    }
  }
  for (Index t = 0; t < run.data.n_curves(); ++t) {
    const auto& g = run.groups[group_of[static_cast<size_t>(t)]];
    per_curve.push_back({{"curve", t},
                         {"rank", rank_of[static_cast<size_t>(t)]},
                         {"pattern", group_of[static_cast<size_t>(t)]},
                         {"n_missing", g.pattern.n_missing()}});
  }
  json patterns = json::array();
  for (const auto& g : run.groups) patterns.push_back(pattern_summary(g, run.data.n_points()));
  return {{"n_curves", run.data.n_curves()},
          {"n_points", run.data.n_points()},
          {"n_covariates", run.data.n_covariates()},
          {"n_complete", static_cast<Index>(complete_indices(run.data).size())},
          {"rank_mode", r.rank},
          {"folds", r.folds},
          {"r_max", r.r_max},
          {"seed", r.seed},
          {"weights", run.weights.vector()},
          {"keep_observed", keep_observed},
          {"patterns", patterns},
          {"curves", per_curve}};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

int fail(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction of partially observed functional data with covariates"};
  app.require_subcommand(1);
  app.footer("Environment: FDRECON_THREADS caps the number of worker threads.");

  DataOptions data_opts;
  RankOptions rank_opts;
  bool keep_observed = false;
  std::string output, sidecar_path;

  auto* rec = app.add_subcommand("reconstruct", "Fill in missing target cells");
  add_data_options(rec, data_opts);
  add_rank_options(rec, rank_opts);
  rec->add_flag("--keep-observed", keep_observed,
                "Keep raw measurements on observed cells instead of fitted values");
  rec->add_option("--output", output, "Reconstructed T x N CSV (default: stdout)");
  rec->add_option("--sidecar", sidecar_path, "JSON with per-curve ranks and patterns");

  double alpha = 0.05;
  bool leave_in = false;
  std::string lower_path, upper_path;
  auto* bands = app.add_subcommand(
      "bands", "Reconstruct and add simultaneous prediction bands on missing cells");
  add_data_options(bands, data_opts);
  add_rank_options(bands, rank_opts);
  bands->add_option("--alpha", alpha, "Band level: coverage target is 1 - alpha")
      ->capture_default_str();
  bands->add_flag("--keep-observed", keep_observed,
                  "Keep raw measurements on observed cells instead of fitted values");
  bands->add_flag("--leave-in", leave_in,
                  "Residualize complete curves with fits that include them");
  bands->add_option("--output", output, "Reconstructed T x N CSV (default: stdout)");
  bands->add_option("--lower", lower_path, "Lower band, T x N CSV, filled on missing cells")
      ->required();
  bands->add_option("--upper", upper_path, "Upper band, T x N CSV, filled on missing cells")
      ->required();
  bands->add_option("--sidecar", sidecar_path, "JSON with per-curve ranks and band widths");

  Index curve = 0;
  std::string cv_json;
  auto* cvr = app.add_subcommand("cv-rank", "Cross-validated rank for one curve's pattern");
  add_data_options(cvr, data_opts);
  cvr->add_option("--curve", curve, "0-based row whose observation pattern is used")
      ->capture_default_str();
  cvr->add_option("--folds", rank_opts.folds, "Cross-validation folds")->capture_default_str();
  cvr->add_option("--rmax", rank_opts.r_max, "Largest rank tried (0: default)")
      ->capture_default_str();
  cvr->add_option("--weights", rank_opts.weights,
                  "'empirical' or a comma-separated list w0,w1,...,wD")
      ->capture_default_str();
  cvr->add_option("--seed", rank_opts.seed, "Seed for the fold assignment")
      ->capture_default_str();
  cvr->add_option("--json", cv_json, "Write the full CV report as JSON");

  sim::SimulationConfig cfg;
  std::string setting = "A", decay = "exp", report_csv;
  bool covariate = false;
  std::optional<Index> sim_rank;
  auto* simc = app.add_subcommand("simulate", "Run the simulation study");
  simc->add_option("--setting", setting, "A: truncation in [0.5,0.75]; B: [0.25,0.75]")
      ->check(CLI::IsMember({"A", "B"}))
      ->capture_default_str();
  simc->add_option("--decay", decay, "Eigenvalue decay: exp (e^-k) or poly (k^-3 / 2)")
      ->check(CLI::IsMember({"exp", "poly"}))
      ->capture_default_str();
  simc->add_option("--sigma", cfg.sigma_e, "Measurement noise sd")->capture_default_str();
  simc->add_option("--tc", cfg.t_complete, "Complete training curves")->capture_default_str();
  simc->add_option("--ntest", cfg.n_test, "Partially observed test curves")
      ->capture_default_str();
  simc->add_option("--ngrid", cfg.n_grid, "Grid points")->capture_default_str();
  simc->add_option("--runs", cfg.n_runs, "Monte Carlo runs")->capture_default_str();
  simc->add_flag("--covariate", covariate, "Use the covariate channel");
  simc->add_option("--seed", cfg.seed, "Base seed; run b uses seed + b")->capture_default_str();
  simc->add_option("--alpha", cfg.alphas, "Band level(s) for coverage; repeatable");
  simc->add_option("--folds", cfg.folds, "Cross-validation folds")->capture_default_str();
  simc->add_option("--rmax", cfg.r_max, "Largest rank tried (0: default)")
      ->capture_default_str();
  simc->add_option("--rank", sim_rank, "Fixed rank (skips cross-validation)");
  simc->add_flag("--leave-in", leave_in,
                 "Residualize complete curves with fits that include them");
  simc->add_option("--output", output, "RunReport JSON (default: stdout)");
  simc->add_option("--csv", report_csv, "Per-run CSV of MAE and coverage");

  std::string report_in;
  auto* rep = app.add_subcommand("report", "Summarize a RunReport JSON");
  rep->add_option("input", report_in, "RunReport JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("io_cli.usage", e.what());
  }

  try {
    if (*rec || *bands) {
      const bool with_bands = static_cast<bool>(*bands);
      if (with_bands && !(alpha > 0.0 && alpha < 1.0)) {
        throw DomainError("--alpha must lie in (0,1)");
      }
      ReconstructionRun run = run_reconstruction(data_opts, rank_opts, keep_observed);
      json side = sidecar(run, rank_opts, keep_observed);
      if (with_bands) {
        const Index t = run.data.n_curves(), n = run.data.n_points();
        Matrix lower = Matrix::Zero(t, n), upper = Matrix::Zero(t, n);
        Mask on_m = Mask::Constant(t, n, false);
        const Matrix smoothed = smooth_complete_curves(run.data);
        json band_info = json::array();
        for (size_t k = 0; k < run.groups.size(); ++k) {
          const auto& g = run.groups[k];
          if (g.pattern.n_missing() == 0) continue;
          const BandModel model =
              fit_band_model(run.data, g.pattern, g.rank, run.weights.values(), smoothed,
                             BandOptions{!leave_in});
          for (Index c : g.curves) {
            // The band is centred on the fitted reconstruction; --keep-observed
            // only affects cells on O, which carry no band.
            const PredictionBand band =
                make_band(run.values.row(c).transpose(), model, alpha);
            for (size_t j = 0; j < band.missing.size(); ++j) {
              const Index i = band.missing[j];
              lower(c, i) = band.lower[static_cast<Index>(j)];
              upper(c, i) = band.upper[static_cast<Index>(j)];
              on_m(c, i) = true;
            }
          }
          band_info.push_back({{"pattern", k},
                               {"q_alpha", model.q_alpha(alpha)},
                               {"omega", std::vector<double>(model.omega_hat.begin(),
                                                             model.omega_hat.end())}});
        }
        side["alpha"] = alpha;
        side["leave_one_out"] = !leave_in;
        side["bands"] = band_info;
        const char delim = data_opts.delimiter[0];
        io::write_file(lower_path, io::to_csv(lower, &on_m, nullptr, delim));
        io::write_file(upper_path, io::to_csv(upper, &on_m, nullptr, delim));
      }
      emit(output, io::to_csv(run.values, nullptr, nullptr, data_opts.delimiter[0]));
      if (!sidecar_path.empty()) io::write_file(sidecar_path, dump(side));
    } else if (*cvr) {
      const FunctionalDataset data = load(data_opts);
      if (curve < 0 || curve >= data.n_curves()) {
        throw DatasetError("--curve " + std::to_string(curve) + " is out of range");
      }
      const WeightVector weights = resolve_weights(data, rank_opts.weights);
      CVOptions cv;
      cv.folds = rank_opts.folds;
      cv.r_max = rank_opts.r_max;
      cv.seed = rank_opts.seed;
      const CVReport report = cv_rank(data, pattern_of(data, curve), weights.values(), cv);
      std::cout << report.chosen_rank << "\n";
      if (!cv_json.empty()) io::write_file(cv_json, dump(io::to_json(report)));
    } else if (*simc) {
      cfg.setting = setting == "A" ? sim::Setting::kA : sim::Setting::kB;
      cfg.decay = decay == "exp" ? sim::EigenDecay::kExponential
                                 : sim::EigenDecay::kPolynomial;
      cfg.use_covariate = covariate;
      cfg.fixed_rank = sim_rank;
      cfg.leave_one_out = !leave_in;
      const sim::RunReport report = sim::run_study(cfg);
      emit(output, dump(io::to_json(report)));
      if (!report_csv.empty()) io::write_file(report_csv, io::per_run_csv(report));
    } else if (*rep) {
      json j;
      try {
        j = json::parse(io::read_file(report_in));
      } catch (const json::exception& e) {
        throw ParseError(report_in + ": " + e.what());
      }
      if (!j.contains("config") || !j.contains("aggregates") || !j.contains("per_run")) {
        throw ParseError(report_in + ": not a RunReport (needs config, per_run, aggregates)");
      }
      const json& c = j["config"];
      const json& a = j["aggregates"];
      std::cout << "setting " << c.value("setting", "?") << ", decay "
                << c.value("decay", "?") << ", sigma " << c.value("sigma_e", 0.0)
                << ", T_C " << c.value("t_complete", 0) << ", covariate "
                << (c.value("use_covariate", false) ? "yes" : "no") << ", runs "
                << j["per_run"].size() << "\n";
      std::cout << "MAE " << a["mae_mean"].get<double>() << " (sd "
                << a["mae_sd"].get<double>() << ")\n";
      if (a.contains("coverage_by_alpha")) {
        for (const auto& row : a["coverage_by_alpha"]) {
          std::cout << "coverage at " << 1.0 - row["alpha"].get<double>() << ": "
                    << row["mean"].get<double>() << " (sd " << row["sd"].get<double>()
                    << ")\n";
        }
      }
    }
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail("io_cli.internal", e.what());
  }
  return 0;
}
