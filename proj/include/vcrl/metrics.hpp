#pragma once

// Per-step training-dynamics records, trailing-window smoothing, and the
// line-delimited metrics stream.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcrl/errors.hpp"

namespace vcrl {

struct StepMetrics {
  std::int64_t step = 0;
  double mean_reward = 0.0;
  double mean_response_length = 0.0;
  double mean_entropy = 0.0;
  double grad_norm = 0.0;
  double objective_value = 0.0;
  double kappa = 0.0;
  std::int64_t groups_removed = 0;
  std::int64_t bank_size = 0;
  std::int64_t bank_popped = 0;
  std::int64_t bank_pushed = 0;
  std::int64_t mask_retained = 0;
  std::int64_t max_replay_count = 0;

  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

// Field names in emission order.
inline const std::vector<std::string>& step_metrics_fields() {
  static const std::vector<std::string> names = {
      "step",          "mean_reward",     "mean_response_length", "mean_entropy",
      "grad_norm",     "objective_value", "kappa",                "groups_removed",
      "bank_size",     "bank_popped",     "bank_pushed",          "mask_retained",
      "max_replay_count"};
  return names;
}

inline nlohmann::ordered_json to_json(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["mean_reward"] = m.mean_reward;
  j["mean_response_length"] = m.mean_response_length;
  j["mean_entropy"] = m.mean_entropy;
  j["grad_norm"] = m.grad_norm;
  j["objective_value"] = m.objective_value;
  j["kappa"] = m.kappa;
  j["groups_removed"] = m.groups_removed;
  j["bank_size"] = m.bank_size;
  j["bank_popped"] = m.bank_popped;
  j["bank_pushed"] = m.bank_pushed;
  j["mask_retained"] = m.mask_retained;
  j["max_replay_count"] = m.max_replay_count;
  return j;
}

inline StepMetrics step_metrics_from_json(const nlohmann::json& j) {
  StepMetrics m;
  j.at("step").get_to(m.step);
  j.at("mean_reward").get_to(m.mean_reward);
  j.at("mean_response_length").get_to(m.mean_response_length);
  j.at("mean_entropy").get_to(m.mean_entropy);
  j.at("grad_norm").get_to(m.grad_norm);
  j.at("objective_value").get_to(m.objective_value);
  j.at("kappa").get_to(m.kappa);
  j.at("groups_removed").get_to(m.groups_removed);
  j.at("bank_size").get_to(m.bank_size);
  j.at("bank_popped").get_to(m.bank_popped);
  j.at("bank_pushed").get_to(m.bank_pushed);
  j.at("mask_retained").get_to(m.mask_retained);
  j.at("max_replay_count").get_to(m.max_replay_count);
  return m;
}

// Trailing mean over min(window, i + 1) points ending at i.
inline std::vector<double> moving_average(std::span<const double> series,
                                          std::size_t window = 20) {
  if (window < 1) throw ConfigError("smoothing window must be >= 1");
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t begin = i + 1 > window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = begin; j <= i; ++j) sum += series[j];
    out[i] = sum / static_cast<double>(i + 1 - begin);
  }
  return out;
}

// Trailing sample standard deviation (divisor n - 1) over the same windows;
// 0 while only one point is available.
inline std::vector<double> rolling_std(std::span<const double> series,
                                       std::size_t window = 20) {
  if (window < 1) throw ConfigError("smoothing window must be >= 1");
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t begin = i + 1 > window ? i + 1 - window : 0;
    const std::size_t n = i + 1 - begin;
    if (n < 2) {
      out[i] = 0.0;
      continue;
    }
    double mean = 0.0;
    for (std::size_t j = begin; j <= i; ++j) mean += series[j];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t j = begin; j <= i; ++j) ss += (series[j] - mean) * (series[j] - mean);
    out[i] = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return out;
}

inline double grad_norm(std::span<const double> gradient) {
  double sq = 0.0;
  for (double g : gradient) sq += g * g;
  return std::sqrt(sq);
}

// Appends one JSON object per step and flushes after each.
class MetricsSink {
 public:
  MetricsSink() = default;

  explicit MetricsSink(const std::string& path, bool append = false) : path_(path) {
    out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!out_) throw IoError(path, "cannot open metrics stream");
  }

  bool is_open() const { return out_.is_open(); }
  const std::string& path() const noexcept { return path_; }

  void emit(const StepMetrics& m) {
    if (!out_.is_open()) throw IoError(path_, "metrics sink is not open");
    out_ << to_json(m).dump() << '\n';
    out_.flush();
    if (!out_) throw IoError(path_, "metrics write failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

// Reads every complete line of a metrics stream; a trailing partial line
// from a writer in flight is ignored.
inline std::vector<StepMetrics> read_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open metrics stream");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<StepMetrics> out;
  std::size_t start = 0;
  int lineno = 0;
  while (true) {
    const auto nl = content.find('\n', start);
    if (nl == std::string::npos) break;
    ++lineno;
    const std::string line = content.substr(start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(step_metrics_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// Extracts one named scalar series from a metrics stream.
inline std::vector<double> metric_series(const std::vector<StepMetrics>& rows,
                                         const std::string& field) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& m : rows) {
    const auto j = to_json(m);
    if (!j.contains(field)) throw ConfigError("unknown metric '" + field + "'");
    out.push_back(j.at(field).get<double>());
  }
  return out;
}

}  // namespace vcrl
