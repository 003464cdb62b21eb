#pragma once

// Run directory layout, checkpoint files and the run manifest.
//
//   <dir>/manifest.json          resolved config, seeds, paths
//   <dir>/config.txt             resolved config as key = value
//   <dir>/metrics.jsonl          one StepMetrics object per line
//   <dir>/checkpoint.json        state after the last step
//   <dir>/checkpoint_<step>.json periodic snapshots

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcrl/config.hpp"
#include "vcrl/corpus.hpp"
#include "vcrl/errors.hpp"
#include "vcrl/metrics.hpp"
#include "vcrl/trainer.hpp"

namespace vcrl {

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr int kCheckpointVersion = 1;

struct RunPaths {
  std::filesystem::path dir;

  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path config() const { return dir / "config.txt"; }
  std::filesystem::path metrics() const { return dir / "metrics.jsonl"; }
  std::filesystem::path checkpoint() const { return dir / "checkpoint.json"; }
  std::filesystem::path checkpoint_at(std::int64_t step) const {
    return dir / ("checkpoint_" + std::to_string(step) + ".json");
  }
};

// ---------------------------------------------------------------------------
// Checkpoint serialization

inline nlohmann::ordered_json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::ordered_json j;
  j["version"] = kCheckpointVersion;
  j["step"] = c.step;
  j["metrics_lines"] = c.metrics_lines;
  j["params"] = {{"clusters", c.params.clusters()},
                 {"vocab", c.params.shape().vocab},
                 {"max_len", c.params.shape().max_len},
                 {"logits", std::vector<double>(c.params.values().begin(),
                                                c.params.values().end())}};
  j["optimizer"] = {{"t", c.optimizer.t}, {"m", c.optimizer.m}, {"v", c.optimizer.v}};
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : c.bank.entries) {
    entries.push_back({{"query_id", to_index(e.query_id)},
                       {"priority", e.priority},
                       {"staleness", e.staleness},
                       {"replay_count", e.replay_count},
                       {"insertion_seq", e.insertion_seq}});
  }
  auto replays = nlohmann::ordered_json::array();
  for (const auto& [id, n] : c.bank.replay_counts) replays.push_back({to_index(id), n});
  j["bank"] = {{"next_seq", c.bank.next_seq}, {"entries", entries}, {"replays", replays}};
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version");
  }
  Checkpoint c;
  j.at("step").get_to(c.step);
  j.at("metrics_lines").get_to(c.metrics_lines);
  const auto& p = j.at("params");
  c.params = PolicyParams(p.at("clusters").get<int>(),
                          WorldShape{p.at("vocab").get<int>(), p.at("max_len").get<int>()});
  const auto logits = p.at("logits").get<std::vector<double>>();
  if (logits.size() != c.params.size()) throw ConfigError("checkpoint logits have the wrong size");
  std::copy(logits.begin(), logits.end(), c.params.values().begin());
  const auto& o = j.at("optimizer");
  o.at("t").get_to(c.optimizer.t);
  o.at("m").get_to(c.optimizer.m);
  o.at("v").get_to(c.optimizer.v);
  const auto& b = j.at("bank");
  b.at("next_seq").get_to(c.bank.next_seq);
  for (const auto& e : b.at("entries")) {
    c.bank.entries.push_back(MemoryEntry{QueryId{e.at("query_id").get<std::uint32_t>()},
                                         e.at("priority").get<double>(),
                                         e.at("staleness").get<std::int64_t>(),
                                         e.at("replay_count").get<int>(),
                                         e.at("insertion_seq").get<std::uint64_t>()});
  }
  for (const auto& r : b.at("replays")) {
    c.bank.replay_counts.emplace_back(QueryId{r.at(0).get<std::uint32_t>()}, r.at(1).get<int>());
  }
  return c;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_text(path, checkpoint_to_json(c).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open checkpoint");
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), e.what());
  }
}

// ---------------------------------------------------------------------------
// Manifest

struct RunOptions {
  std::string run_id;
  std::string corpus_path;
  std::optional<std::filesystem::path> resume_from;
  bool quiet = true;
};

inline nlohmann::ordered_json make_manifest(const TrainConfig& config, const RunPaths& paths,
                                            const RunOptions& opts) {
  nlohmann::ordered_json j;
  j["run_id"] = opts.run_id;
  j["artifact_version"] = kArtifactVersion;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : config_pairs(config)) cfg[k] = v;
  j["config"] = cfg;
  j["corpus"] = opts.corpus_path;
  j["outputs"] = {{"metrics", paths.metrics().string()},
                  {"checkpoint", paths.checkpoint().string()},
                  {"config", paths.config().string()}};
  j["seeds"] = {{"rollout", config.rollout_seed}, {"init", config.init_seed}};
  j["notes"] = {"memory-bank pushes reuse the p computed from this step's pre-update rollouts"};
  return j;
}

// Keeps the first `lines` complete lines of a metrics stream.
inline void truncate_lines(const std::filesystem::path& path, std::int64_t lines) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open metrics stream for resume");
  std::string kept;
  std::string line;
  for (std::int64_t i = 0; i < lines && std::getline(in, line); ++i) kept += line + "\n";
  in.close();
  write_text(path, kept);
}

struct RunResult {
  RunPaths paths;
  std::vector<StepMetrics> metrics;  // steps executed by this call
  Checkpoint final_checkpoint;
};

// Executes steps up to config.steps, writing metrics after every step and
// checkpoints every config.checkpoint_every steps plus at the end.
inline RunResult run(const TrainConfig& config, const Corpus& corpus,
                     const std::filesystem::path& dir, const RunOptions& opts = {}) {
  config.validate();
  RunPaths paths{dir};
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create run directory: " + ec.message());

  std::optional<Trainer> trainer;
  std::int64_t lines = 0;
  if (opts.resume_from) {
    const auto ckpt = load_checkpoint(*opts.resume_from);
    if (ckpt.step >= config.steps) {
      throw ConfigError("checkpoint is already at step " + std::to_string(ckpt.step));
    }
    trainer.emplace(Trainer::resume(config, corpus, ckpt));
    lines = ckpt.metrics_lines;
    truncate_lines(paths.metrics(), lines);
  } else {
    trainer.emplace(config, corpus);
    write_text(paths.manifest(), make_manifest(config, paths, opts).dump(2) + "\n");
    write_config_file(config, paths.config().string());
  }

  MetricsSink sink(paths.metrics().string(), opts.resume_from.has_value());
  RunResult result{paths, {}, {}};
  while (trainer->completed_steps() < config.steps) {
    const auto outcome = trainer->step();
    sink.emit(outcome.metrics);
    ++lines;
    result.metrics.push_back(outcome.metrics);
    const auto step = trainer->completed_steps();
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
        step < config.steps) {
      save_checkpoint(trainer->checkpoint(lines), paths.checkpoint_at(step));
    }
  }
  result.final_checkpoint = trainer->checkpoint(lines);
  save_checkpoint(result.final_checkpoint, paths.checkpoint());
  return result;
}

}  // namespace vcrl
