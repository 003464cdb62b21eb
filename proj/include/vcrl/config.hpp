#pragma once

// Training configuration and its flat `key = value` text form.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vcrl/errors.hpp"
#include "vcrl/memory_bank.hpp"
#include "vcrl/objectives.hpp"
#include "vcrl/rollout_env.hpp"

namespace vcrl {

struct KappaSchedule {
  double early = 0.3;
  std::int64_t switch_step = 20;
  double late = 0.8;

  friend bool operator==(const KappaSchedule&, const KappaSchedule&) = default;
};

// kappa for a 1-based step: `early` through switch_step inclusive, then `late`.
inline double kappa_at(std::int64_t step, const KappaSchedule& s) {
  return step <= s.switch_step ? s.early : s.late;
}

enum class ShortfallPolicy { shrink, top_up_from_corpus };
enum class OptimizerKind { sgd, adaptive_moments };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct TrainConfig {
  Method method = Method::vcrl;
  int batch_size = 32;
  int group_size = 16;
  std::int64_t steps = 300;
  KappaSchedule kappa;
  double clip_eps = 0.2;
  double dapo_eps_low = 0.2;
  double dapo_eps_high = 0.28;
  double gspo_eps = 0.0003;
  BankConfig bank;
  OptimizerConfig optimizer;
  WorldShape world;
  std::vector<double> init_success = {0.95, 0.5, 0.05};
  double init_noise = 0.05;
  std::uint64_t rollout_seed = 0;
  std::uint64_t init_seed = 0;
  ShortfallPolicy shortfall = ShortfallPolicy::shrink;
  std::int64_t checkpoint_every = 50;  // 0 writes only the final checkpoint

  ClipConfig clip() const {
    switch (method) {
      case Method::dapo: return ClipConfig::asymmetric(dapo_eps_low, dapo_eps_high);
      case Method::gspo: return ClipConfig::sequence(gspo_eps);
      default: return ClipConfig::symmetric(clip_eps);
    }
  }

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (group_size < 2) throw ConfigError("group_size must be >= 2");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    for (double k : {kappa.early, kappa.late}) {
      if (!(k >= 0.0 && k <= 1.0)) throw ConfigError("kappa values must lie in [0, 1]");
    }
    if (kappa.switch_step < 0) throw ConfigError("kappa_switch_step must be >= 0");
    clip().validate();
    bank.validate();
    if (!(optimizer.lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
        !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
      throw ConfigError("optimizer betas must lie in [0, 1)");
    }
    world.validate();
    for (double s : init_success) {
      if (!(s > 0.0 && s < 1.0)) throw ConfigError("init_success entries must lie in (0, 1)");
    }
    if (init_noise < 0.0) throw ConfigError("init_noise must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used == v.size()) return d;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long d = std::stoull(v, &used);
      if (used == v.size()) return d;
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
}

inline std::string format_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace detail

// Applies one textual setting. Unknown keys are errors.
inline void apply_setting(TrainConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = trim(raw);
  if (key == "method") {
    c.method = parse_method(v);
  } else if (key == "batch_size") {
    c.batch_size = static_cast<int>(parse_int(key, v));
  } else if (key == "group_size") {
    c.group_size = static_cast<int>(parse_int(key, v));
  } else if (key == "steps") {
    c.steps = parse_int(key, v);
  } else if (key == "kappa_early") {
    c.kappa.early = parse_double(key, v);
  } else if (key == "kappa_switch_step") {
    c.kappa.switch_step = parse_int(key, v);
  } else if (key == "kappa_late") {
    c.kappa.late = parse_double(key, v);
  } else if (key == "clip_eps") {
    c.clip_eps = parse_double(key, v);
  } else if (key == "dapo_eps_low") {
    c.dapo_eps_low = parse_double(key, v);
  } else if (key == "dapo_eps_high") {
    c.dapo_eps_high = parse_double(key, v);
  } else if (key == "gspo_eps") {
    c.gspo_eps = parse_double(key, v);
  } else if (key == "momentum") {
    c.bank.momentum = parse_double(key, v);
  } else if (key == "max_replays") {
    c.bank.max_replays = static_cast<int>(parse_int(key, v));
  } else if (key == "bank_capacity") {
    const auto cap = parse_uint(key, v);
    c.bank.capacity = cap == 0 ? std::nullopt : std::optional<std::size_t>(cap);
  } else if (key == "optimizer") {
    if (v == "sgd") c.optimizer.kind = OptimizerKind::sgd;
    else if (v == "adaptive_moments" || v == "adamw") c.optimizer.kind = OptimizerKind::adaptive_moments;
    else throw ConfigError("unknown optimizer '" + v + "'");
  } else if (key == "lr") {
    c.optimizer.lr = parse_double(key, v);
  } else if (key == "beta1") {
    c.optimizer.beta1 = parse_double(key, v);
  } else if (key == "beta2") {
    c.optimizer.beta2 = parse_double(key, v);
  } else if (key == "adam_eps") {
    c.optimizer.eps = parse_double(key, v);
  } else if (key == "weight_decay") {
    c.optimizer.weight_decay = parse_double(key, v);
  } else if (key == "vocab") {
    c.world.vocab = static_cast<int>(parse_int(key, v));
  } else if (key == "max_len") {
    c.world.max_len = static_cast<int>(parse_int(key, v));
  } else if (key == "init_success") {
    c.init_success.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) c.init_success.push_back(parse_double(key, item));
    }
  } else if (key == "init_noise") {
    c.init_noise = parse_double(key, v);
  } else if (key == "rollout_seed") {
    c.rollout_seed = parse_uint(key, v);
  } else if (key == "init_seed") {
    c.init_seed = parse_uint(key, v);
  } else if (key == "shortfall") {
    if (v == "shrink") c.shortfall = ShortfallPolicy::shrink;
    else if (v == "top_up_from_corpus") c.shortfall = ShortfallPolicy::top_up_from_corpus;
    else throw ConfigError("unknown shortfall policy '" + v + "'");
  } else if (key == "checkpoint_every") {
    c.checkpoint_every = parse_int(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

// Every setting with its resolved value, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> config_pairs(const TrainConfig& c) {
  using detail::format_double;
  std::string succ;
  for (std::size_t i = 0; i < c.init_success.size(); ++i) {
    if (i) succ += ",";
    succ += format_double(c.init_success[i]);
  }
  return {
      {"method", std::string(to_string(c.method))},
      {"batch_size", std::to_string(c.batch_size)},
      {"group_size", std::to_string(c.group_size)},
      {"steps", std::to_string(c.steps)},
      {"kappa_early", format_double(c.kappa.early)},
      {"kappa_switch_step", std::to_string(c.kappa.switch_step)},
      {"kappa_late", format_double(c.kappa.late)},
      {"clip_eps", format_double(c.clip_eps)},
      {"dapo_eps_low", format_double(c.dapo_eps_low)},
      {"dapo_eps_high", format_double(c.dapo_eps_high)},
      {"gspo_eps", format_double(c.gspo_eps)},
      {"momentum", format_double(c.bank.momentum)},
      {"max_replays", std::to_string(c.bank.max_replays)},
      {"bank_capacity", std::to_string(c.bank.capacity.value_or(0))},
      {"optimizer", c.optimizer.kind == OptimizerKind::sgd ? "sgd" : "adaptive_moments"},
      {"lr", format_double(c.optimizer.lr)},
      {"beta1", format_double(c.optimizer.beta1)},
      {"beta2", format_double(c.optimizer.beta2)},
      {"adam_eps", format_double(c.optimizer.eps)},
      {"weight_decay", format_double(c.optimizer.weight_decay)},
      {"vocab", std::to_string(c.world.vocab)},
      {"max_len", std::to_string(c.world.max_len)},
      {"init_success", succ},
      {"init_noise", format_double(c.init_noise)},
      {"rollout_seed", std::to_string(c.rollout_seed)},
      {"init_seed", std::to_string(c.init_seed)},
      {"shortfall", c.shortfall == ShortfallPolicy::shrink ? "shrink" : "top_up_from_corpus"},
      {"checkpoint_every", std::to_string(c.checkpoint_every)},
  };
}

// Reads `key = value` lines; '#' starts a comment.
inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config file");
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  return out;
}

inline void write_config_file(const TrainConfig& c, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot write config file");
  for (const auto& [k, v] : config_pairs(c)) out << k << " = " << v << '\n';
  if (!out) throw IoError(path, "write failed");
}

// Built-in defaults, then the file settings, then overrides.
inline TrainConfig resolve_config(const std::map<std::string, std::string>& file_settings,
                                  const std::map<std::string, std::string>& overrides) {
  TrainConfig c;
  for (const auto& [k, v] : file_settings) apply_setting(c, k, v);
  for (const auto& [k, v] : overrides) apply_setting(c, k, v);
  c.validate();
  return c;
}

}  // namespace vcrl
