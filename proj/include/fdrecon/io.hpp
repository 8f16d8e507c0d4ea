#pragma once

// Wide CSV files (one row per curve, one column per grid point, one file per
// channel) and JSON serialization of reports.

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "fdrecon/core_model.hpp"
#include "fdrecon/error.hpp"
#include "fdrecon/selection.hpp"
#include "fdrecon/simulation.hpp"

namespace fdrecon::io {

struct DatasetFileSet {
  std::string target;
  std::vector<std::string> covariates;
  char delimiter = ',';
  bool grid_header = false;  // first row holds the N grid points
  std::string missing_token = "NA";  // in addition to "" and NaN
};

struct CsvTable {
  std::optional<std::vector<double>> header;
  Matrix values;  // missing cells hold 0
  Mask present;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

inline bool is_missing_token(std::string_view s, std::string_view token) {
  return s.empty() || s == token || s == "NaN" || s == "nan" || s == "NAN";
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline double parse_number(std::string_view cell, const std::string& where) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    throw ParseError("non-numeric cell '" + std::string(cell) + "' at " + where);
  }
  return value;
}

}  // namespace detail

/// Parses a wide CSV. Missing cells are "", `missing_token` or NaN spellings.
inline CsvTable parse_csv(std::string_view text, char delimiter, bool grid_header,
                          const std::string& name = "<csv>",
                          std::string_view missing_token = "NA") {
  std::vector<std::string_view> lines;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!detail::trim(line).empty()) lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) throw ParseError(name + ": file is empty");

  CsvTable table;
  size_t first = 0;
  if (grid_header) {
    std::vector<double> header;
    const auto cells = detail::split(lines[0], delimiter);
    for (size_t c = 0; c < cells.size(); ++c) {
      header.push_back(detail::parse_number(
          cells[c], name + " header column " + std::to_string(c + 1)));
    }
    table.header = std::move(header);
    first = 1;
  }
  if (lines.size() == first) throw ParseError(name + ": no data rows");

  const size_t n_cols = detail::split(lines[first], delimiter).size();
  if (table.header && table.header->size() != n_cols) {
    throw ParseError(name + ": header has " + std::to_string(table.header->size()) +
                     " columns, data has " + std::to_string(n_cols));
  }
  const auto n_rows = static_cast<Index>(lines.size() - first);
  table.values = Matrix::Zero(n_rows, static_cast<Index>(n_cols));
  table.present = Mask::Constant(n_rows, static_cast<Index>(n_cols), true);
  for (Index r = 0; r < n_rows; ++r) {
    const auto cells = detail::split(lines[first + static_cast<size_t>(r)], delimiter);
    if (cells.size() != n_cols) {
      throw ParseError(name + ": row " + std::to_string(r + 1) + " has " +
                       std::to_string(cells.size()) + " columns, expected " +
                       std::to_string(n_cols));
    }
    for (size_t c = 0; c < n_cols; ++c) {
      if (detail::is_missing_token(cells[c], missing_token)) {
        table.present(r, static_cast<Index>(c)) = false;
      } else {
        table.values(r, static_cast<Index>(c)) = detail::parse_number(
            cells[c], name + " row " + std::to_string(r + 1) + " column " +
                          std::to_string(c + 1));
      }
    }
  }
  return table;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << text;
}

inline CsvTable read_csv(const std::string& path, char delimiter, bool grid_header,
                         std::string_view missing_token = "NA") {
  return parse_csv(read_file(path), delimiter, grid_header, path, missing_token);
}

inline FunctionalDataset load_dataset(const DatasetFileSet& files) {
  const CsvTable target = read_csv(files.target, files.delimiter, files.grid_header,
                                   files.missing_token);
  Grid grid = target.header ? Grid::from_points(*target.header)
                            : Grid::equispaced(target.values.cols());
  std::vector<Matrix> covariates;
  for (const std::string& path : files.covariates) {
    CsvTable cov =
        read_csv(path, files.delimiter, files.grid_header, files.missing_token);
    if (cov.values.rows() != target.values.rows() ||
        cov.values.cols() != target.values.cols()) {
      throw ParseError(path + ": shape " + std::to_string(cov.values.rows()) + "x" +
                       std::to_string(cov.values.cols()) +
                       " does not match target shape " +
                       std::to_string(target.values.rows()) + "x" +
                       std::to_string(target.values.cols()));
    }
    if (cov.header && !(Grid::from_points(*cov.header) == grid)) {
      throw ParseError(path + ": grid header differs from the target's");
    }
    if (!cov.present.all()) {
      Index r = 0, c = 0;
      (!cov.present).cast<int>().maxCoeff(&r, &c);
      throw CovariateMissingError(path + ": missing covariate value at row " +
                                  std::to_string(r + 1) + " column " +
                                  std::to_string(c + 1));
    }
    covariates.push_back(std::move(cov.values));
  }
  return FunctionalDataset(std::move(grid), target.values, target.present,
                           std::move(covariates));
}

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

/// Wide CSV; cells where `present` is false are written empty.
inline std::string to_csv(const Matrix& values, const Mask* present = nullptr,
                          const Grid* header = nullptr, char delimiter = ',') {
  std::string out;
  if (header != nullptr) {
    for (Index i = 0; i < header->size(); ++i) {
      if (i > 0) out += delimiter;
      out += format_double((*header)[i]);
    }
    out += '\n';
  }
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      if (c > 0) out += delimiter;
      if (present == nullptr || (*present)(r, c)) out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

inline std::string decay_name(sim::EigenDecay d) {
  return d == sim::EigenDecay::kExponential ? "exp" : "poly";
}
inline std::string setting_name(sim::Setting s) {
  return s == sim::Setting::kA ? "A" : "B";
}

inline nlohmann::json to_json(const sim::SimulationConfig& c) {
  nlohmann::json j = {
      {"setting", setting_name(c.setting)},
      {"decay", decay_name(c.decay)},
      {"sigma_e", c.sigma_e},
      {"t_complete", c.t_complete},
      {"n_test", c.n_test},
      {"n_grid", c.n_grid},
      {"n_runs", c.n_runs},
      {"seed", c.seed},
      {"use_covariate", c.use_covariate},
      {"alphas", c.alphas},
      {"folds", c.folds},
      {"r_max", c.r_max == 0 ? nlohmann::json("default") : nlohmann::json(c.r_max)},
      {"leave_one_out", c.leave_one_out},
  };
  j["fixed_rank"] = c.fixed_rank ? nlohmann::json(*c.fixed_rank) : nlohmann::json(nullptr);
  return j;
}

/// {config, per_run: [...], aggregates: {...}}
inline nlohmann::json to_json(const sim::RunReport& report) {
  nlohmann::json per_run = nlohmann::json::array();
  for (size_t b = 0; b < report.mae_per_run.size(); ++b) {
    nlohmann::json row = {{"run", b},
                          {"seed", report.config.seed + b},
                          {"mae", report.mae_per_run[b]},
                          {"mean_rank", report.mean_rank_per_run[b]}};
    if (!report.coverage.empty()) {
      nlohmann::json cov = nlohmann::json::object();
      for (const auto& series : report.coverage) {
        cov[format_double(series.alpha)] = series.per_run[b];
      }
      row["coverage"] = cov;
    }
    per_run.push_back(row);
  }
  nlohmann::json aggregates = {{"mae_mean", report.mae_mean},
                               {"mae_sd", report.mae_sd}};
  if (!report.coverage.empty()) {
    aggregates["coverage_mean"] = report.coverage.front().mean;
    aggregates["coverage_sd"] = report.coverage.front().sd;
    nlohmann::json by_alpha = nlohmann::json::array();
    for (const auto& series : report.coverage) {
      by_alpha.push_back({{"alpha", series.alpha},
                          {"mean", series.mean},
                          {"sd", series.sd}});
    }
    aggregates["coverage_by_alpha"] = by_alpha;
  } else {
    aggregates["coverage_mean"] = nullptr;
    aggregates["coverage_sd"] = nullptr;
  }
  return {{"config", to_json(report.config)},
          {"per_run", per_run},
          {"aggregates", aggregates}};
}

/// Flat per-run table: run, seed, mae, mean_rank, coverage_<alpha>...
inline std::string per_run_csv(const sim::RunReport& report) {
  std::string out = "run,seed,mae,mean_rank";
  for (const auto& series : report.coverage) {
    out += ",coverage_" + format_double(series.alpha);
  }
  out += '\n';
  for (size_t b = 0; b < report.mae_per_run.size(); ++b) {
    out += std::to_string(b) + ',' + std::to_string(report.config.seed + b) + ',' +
           format_double(report.mae_per_run[b]) + ',' +
           format_double(report.mean_rank_per_run[b]);
    for (const auto& series : report.coverage) {
      out += ',' + format_double(series.per_run[b]);
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const CVReport& r) {
  return {{"chosen_rank", r.chosen_rank},
          {"sse_per_rank", r.sse_per_rank},
          {"folds", r.folds},
          {"r_max", r.r_max},
          {"seed", r.seed},
          {"complete_curves", r.complete_curves},
          {"fold_assignment", r.fold_assignment}};
}

}  // namespace fdrecon::io
