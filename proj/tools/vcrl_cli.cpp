// vcrl: corpus generation, training runs, comparisons, verification suites
// and plot-data export.
//
// Exit codes: 0 ok, 1 usage or config error, 2 runtime failure,
// 3 verification failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vcrl/checks.hpp"
#include "vcrl/config.hpp"
#include "vcrl/corpus.hpp"
#include "vcrl/errors.hpp"
#include "vcrl/report.hpp"
#include "vcrl/run.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerify = 3;

fs::path output_root() {
  if (const char* env = std::getenv("VCRL_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  vcrl::write_text(path, j.dump(2) + "\n");
}

nlohmann::ordered_json base_manifest(const std::string& command, const std::string& argv) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["argv"] = argv;
  j["artifact_version"] = vcrl::kArtifactVersion;
  return j;
}

struct GenCorpusArgs {
  std::uint64_t seed = 1;
  std::string clusters = "2:100,5:100,9:100";
  int vocab = 8;
  int lmax = 12;
  std::string out;
};

int cmd_gen_corpus(const GenCorpusArgs& a, const std::string& argv) {
  vcrl::WorldShape shape{a.vocab, a.lmax};
  shape.validate();
  const auto specs = vcrl::parse_cluster_specs(a.clusters);
  for (const auto& s : specs) {
    if (s.max_len > shape.max_len) {
      throw vcrl::ConfigError("cluster length " + std::to_string(s.max_len) +
                              " exceeds --lmax " + std::to_string(shape.max_len));
    }
  }
  const auto corpus = vcrl::gen_corpus(a.seed, specs, shape);
  vcrl::validate_corpus(corpus, shape);
  vcrl::save_corpus(corpus, a.out);
  auto m = base_manifest("gen-corpus", argv);
  m["seed"] = a.seed;
  m["clusters"] = a.clusters;
  m["vocab"] = a.vocab;
  m["max_len"] = a.lmax;
  m["tasks"] = corpus.size();
  m["outputs"] = {{"corpus", a.out}};
  write_json(a.out + ".manifest.json", m);
  std::cout << "wrote " << corpus.size() << " tasks to " << a.out << '\n';
  return kExitOk;
}

struct RunArgs {
  std::string method;
  std::string corpus;
  std::optional<std::int64_t> steps;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string resume;
  std::vector<std::string> set;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  std::map<std::string, std::string> file_settings;
  if (!a.config.empty()) file_settings = vcrl::read_config_file(a.config);
  std::map<std::string, std::string> overrides;
  for (const auto& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw vcrl::ConfigError("--set expects key=value, got '" + kv + "'");
    overrides[vcrl::detail::trim(kv.substr(0, eq))] = kv.substr(eq + 1);
  }
  if (!a.method.empty()) overrides["method"] = a.method;
  if (a.steps) overrides["steps"] = std::to_string(*a.steps);
  if (a.seed) {
    overrides["rollout_seed"] = std::to_string(*a.seed);
    overrides["init_seed"] = std::to_string(*a.seed);
  }
  const auto config = vcrl::resolve_config(file_settings, overrides);

  const auto corpus = vcrl::load_corpus(a.corpus);
  vcrl::validate_corpus(corpus, config.world);

  vcrl::RunOptions opts;
  opts.run_id = std::string(vcrl::to_string(config.method)) + "-seed" +
                std::to_string(config.rollout_seed);
  opts.corpus_path = fs::absolute(a.corpus).string();
  if (!a.resume.empty()) opts.resume_from = fs::path(a.resume);
  const fs::path dir = a.out.empty() ? output_root() / opts.run_id : fs::path(a.out);

  const auto result = vcrl::run(config, corpus, dir, opts);
  if (!a.quiet) {
    const auto& last = result.metrics.empty() ? vcrl::StepMetrics{} : result.metrics.back();
    std::cout << "run " << opts.run_id << ": " << result.final_checkpoint.step
              << " steps, last mean_reward " << last.mean_reward << ", metrics at "
              << result.paths.metrics().string() << '\n';
  }
  return kExitOk;
}

struct CompareArgs {
  std::vector<std::string> runs;
  std::size_t window = 20;
  std::string out;
};

int cmd_compare(const CompareArgs& a, const std::string& argv) {
  std::vector<vcrl::RunData> runs;
  for (const auto& r : a.runs) runs.push_back(vcrl::load_run(r));
  const auto cmp = vcrl::compare_runs(runs, a.window);
  for (const auto& w : cmp.warnings) std::cerr << "warning: " << w << '\n';
  const std::string summary = vcrl::summary_csv(cmp);
  std::cout << summary;
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    fs::create_directories(dir);
    vcrl::write_text(dir / "summary.csv", summary);
    vcrl::write_text(dir / "series.csv", vcrl::table_csv(cmp.series_header, cmp.series_rows));
    auto m = base_manifest("compare", argv);
    m["runs"] = a.runs;
    m["window"] = a.window;
    m["aligned_steps"] = cmp.steps;
    m["warnings"] = cmp.warnings;
    m["outputs"] = {{"summary", (dir / "summary.csv").string()},
                    {"series", (dir / "series.csv").string()}};
    write_json(dir / "manifest.json", m);
  }
  return kExitOk;
}

struct VerifyArgs {
  std::vector<std::string> suites;
  std::uint64_t seed = vcrl::checks::CheckOptions{}.seed;
  bool perturb = false;
};

int cmd_verify(const VerifyArgs& a) {
  vcrl::checks::CheckOptions opts;
  opts.seed = a.seed;
  if (a.perturb) opts.gradient_perturbation = 1e-3;
  const auto all = vcrl::checks::all_suites();
  for (const auto& name : a.suites) {
    bool known = false;
    for (const auto& s : all) known = known || s.name == name;
    if (!known) throw vcrl::ConfigError("unknown suite '" + name + "'");
  }
  bool ok = true;
  for (const auto& s : all) {
    if (!a.suites.empty() &&
        std::find(a.suites.begin(), a.suites.end(), s.name) == a.suites.end()) {
      continue;
    }
    const auto r = vcrl::checks::run_timed(s, opts);
    ok = ok && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << " ("
              << vcrl::checks::fmt(r.seconds) << " s)\n";
  }
  return ok ? kExitOk : kExitVerify;
}

struct ExportArgs {
  std::string run;
  std::size_t window = 20;
  std::string out;
};

int cmd_export(const ExportArgs& a, const std::string& argv) {
  const auto run = vcrl::load_run(a.run);
  const std::string csv = vcrl::export_csv(run, a.window);
  if (a.out.empty()) {
    std::cout << csv;
    return kExitOk;
  }
  vcrl::write_text(a.out, csv);
  auto m = base_manifest("export", argv);
  m["run"] = a.run;
  m["window"] = a.window;
  m["steps"] = run.rows.size();
  m["outputs"] = {{"csv", a.out}};
  write_json(a.out + ".manifest.json", m);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variance-based curriculum RL engine on a synthetic verifiable-reward task"};
  app.require_subcommand(1);
  const std::string argv_text = command_line(argc, argv);

  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a deterministic task corpus");
  gen_cmd->add_option("--seed", gen.seed, "Corpus seed");
  gen_cmd->add_option("--clusters", gen.clusters, "Cluster spec, e.g. 2:100,5:100,9:100 or 2-4:50");
  gen_cmd->add_option("--vocab", gen.vocab, "Vocabulary size (excluding end-of-sequence)");
  gen_cmd->add_option("--lmax", gen.lmax, "Maximum target length");
  gen_cmd->add_option("--out", gen.out, "Output corpus file")->required();

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Train one method on a corpus");
  run_cmd->add_option("--method", run.method, "grpo | dapo | gspo | vcrl");
  run_cmd->add_option("--corpus", run.corpus, "Corpus file")->required();
  run_cmd->add_option("--steps", run.steps, "Training steps");
  run_cmd->add_option("--seed", run.seed, "Sets both rollout_seed and init_seed");
  run_cmd->add_option("--config", run.config, "key = value config file");
  run_cmd->add_option("--set", run.set, "Extra key=value override (repeatable)");
  run_cmd->add_option("--out", run.out, "Run directory (default $VCRL_OUTPUT_ROOT/<method>-seed<seed>)");
  run_cmd->add_option("--resume", run.resume, "Checkpoint file to resume from");
  run_cmd->add_flag("--quiet", run.quiet, "No summary line");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Summarize and align two or more runs");
  cmp_cmd->add_option("runs", cmp.runs, "Run directories")->required()->expected(2, -1);
  cmp_cmd->add_option("--window", cmp.window, "Smoothing window");
  cmp_cmd->add_option("--out", cmp.out, "Directory for summary.csv, series.csv and a manifest");

  VerifyArgs ver;
  auto* ver_cmd = app.add_subcommand("verify", "Run oracle and invariant suites");
  ver_cmd->add_option("--suite", ver.suites, "Suite name (repeatable); default all")->delimiter(',');
  ver_cmd->add_option("--seed", ver.seed, "Seed for random fixtures");
  ver_cmd->add_flag("--perturb-gradients", ver.perturb,
                    "Test hook: scale analytic gradients by 1.001 so the gradient suite fails");

  ExportArgs exp;
  auto* exp_cmd = app.add_subcommand("export", "Per-step plot data for one run as CSV");
  exp_cmd->add_option("run", exp.run, "Run directory")->required();
  exp_cmd->add_option("--window", exp.window, "Smoothing window");
  exp_cmd->add_option("--out", exp.out, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_corpus(gen, argv_text);
    if (*run_cmd) return cmd_run(run);
    if (*cmp_cmd) return cmd_compare(cmp, argv_text);
    if (*ver_cmd) return cmd_verify(ver);
    if (*exp_cmd) return cmd_export(exp, argv_text);
  } catch (const vcrl::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const vcrl::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
