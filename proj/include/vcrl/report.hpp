#pragma once

// Read-only views over finished (or in-flight) run directories: the compare
// summary table, step-aligned smoothed series, and plot-data export.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcrl/errors.hpp"
#include "vcrl/metrics.hpp"
#include "vcrl/run.hpp"

namespace vcrl {

struct RunData {
  std::filesystem::path dir;
  std::string label;
  std::string method;
  std::string seed;
  std::vector<StepMetrics> rows;
};

inline RunData load_run(const std::filesystem::path& dir) {
  RunPaths paths{dir};
  RunData d;
  d.dir = dir;
  d.label = dir.filename().string();
  if (d.label.empty()) d.label = dir.parent_path().filename().string();
  std::ifstream in(paths.manifest());
  if (!in) throw IoError(paths.manifest().string(), "cannot open run manifest");
  nlohmann::json manifest;
  try {
    in >> manifest;
    const auto& cfg = manifest.at("config");
    d.method = cfg.at("method").get<std::string>();
    d.seed = cfg.at("rollout_seed").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(paths.manifest().string(), e.what());
  }
  d.rows = read_metrics(paths.metrics().string());
  return d;
}

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

struct SummaryRow {
  std::string method;
  std::string seed;
  double final_reward_ma = 0.0;
  double final_reward_std = 0.0;
  double mean_grad_norm = 0.0;
  double mean_entropy = 0.0;
};

struct Comparison {
  std::size_t steps = 0;  // common prefix length
  std::vector<std::string> warnings;
  std::vector<SummaryRow> summary;
  std::vector<std::string> series_header;
  std::vector<std::vector<double>> series_rows;
};

inline const std::vector<std::string>& compared_fields() {
  static const std::vector<std::string> f = {"mean_reward", "mean_entropy",
                                             "mean_response_length", "grad_norm"};
  return f;
}

// Aligns runs to the shortest stream and smooths every compared field.
inline Comparison compare_runs(std::vector<RunData> runs, std::size_t window) {
  if (runs.size() < 2) throw ConfigError("compare needs at least two runs");
  if (window == 0) throw ConfigError("window must be >= 1");
  Comparison c;
  c.steps = runs.front().rows.size();
  for (const auto& r : runs) c.steps = std::min(c.steps, r.rows.size());
  for (const auto& r : runs) {
    if (r.rows.size() != c.steps) {
      c.warnings.push_back("run " + r.label + " has " + std::to_string(r.rows.size()) +
                           " steps; aligned to " + std::to_string(c.steps));
    }
  }
  if (c.steps == 0) throw ConfigError("a compared run has no completed steps");

  c.series_header.push_back("step");
  std::vector<std::vector<double>> columns;
  for (auto& r : runs) {
    r.rows.resize(c.steps);
    const auto reward = metric_series(r.rows, "mean_reward");
    const auto reward_ma = moving_average(reward, window);
    const auto reward_sd = rolling_std(reward, window);
    const auto grad = metric_series(r.rows, "grad_norm");
    const auto entropy = metric_series(r.rows, "mean_entropy");
    c.summary.push_back({r.method, r.seed, reward_ma.back(), reward_sd.back(), mean_of(grad),
                         mean_of(entropy)});
    for (const auto& field : compared_fields()) {
      c.series_header.push_back(r.label + ":" + field);
      columns.push_back(moving_average(metric_series(r.rows, field), window));
    }
    c.series_header.push_back(r.label + ":reward_std");
    columns.push_back(reward_sd);
  }
  for (std::size_t i = 0; i < c.steps; ++i) {
    std::vector<double> row{static_cast<double>(runs.front().rows[i].step)};
    for (const auto& col : columns) row.push_back(col[i]);
    c.series_rows.push_back(std::move(row));
  }
  return c;
}

inline std::string csv_number(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::string summary_csv(const Comparison& c) {
  std::ostringstream os;
  os << "method,seed,final_reward_ma20,final_reward_std20,mean_grad_norm,mean_entropy\n";
  for (const auto& r : c.summary) {
    os << r.method << ',' << r.seed << ',' << csv_number(r.final_reward_ma) << ','
       << csv_number(r.final_reward_std) << ',' << csv_number(r.mean_grad_norm) << ','
       << csv_number(r.mean_entropy) << '\n';
  }
  return os.str();
}

inline std::string table_csv(const std::vector<std::string>& header,
                             const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_number(row[i]);
    os << '\n';
  }
  return os.str();
}

// Per-step plot data for one run: every raw field plus its smoothed mean and
// rolling std.
inline std::string export_csv(const RunData& run, std::size_t window) {
  if (window == 0) throw ConfigError("window must be >= 1");
  std::vector<std::string> header{"step"};
  std::vector<std::vector<double>> columns;
  for (const auto& field : step_metrics_fields()) {
    if (field == "step") continue;
    const auto raw = metric_series(run.rows, field);
    header.push_back(field);
    header.push_back(field + "_ma");
    header.push_back(field + "_std");
    columns.push_back(raw);
    columns.push_back(moving_average(raw, window));
    columns.push_back(rolling_std(raw, window));
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < run.rows.size(); ++i) {
    std::vector<double> row{static_cast<double>(run.rows[i].step)};
    for (const auto& col : columns) row.push_back(col[i]);
    rows.push_back(std::move(row));
  }
  return table_csv(header, rows);
}

}  // namespace vcrl
