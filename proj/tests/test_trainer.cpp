#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vcrl/corpus.hpp"
#include "vcrl/run.hpp"
#include "vcrl/trainer.hpp"

using namespace vcrl;

namespace {

Corpus small_corpus() {
  return gen_corpus(3, parse_cluster_specs("2:20,5:20,9:20"), WorldShape{});
}

TrainConfig small_config(Method method) {
  TrainConfig c;
  c.method = method;
  c.batch_size = 12;
  c.group_size = 8;
  c.steps = 30;
  c.checkpoint_every = 10;
  c.rollout_seed = 11;
  c.init_seed = 12;
  return c;
}

}  // namespace

TEST(InitialParams, CalibratedToClusterTargets) {
  const auto corpus = small_corpus();
  TrainConfig c = small_config(Method::vcrl);
  c.init_noise = 0.0;
  const auto params = initial_params(corpus, c);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(success_probability(params, reference_task(corpus, k)),
                c.init_success[static_cast<std::size_t>(k)], 1e-9);
  }
  // every task in a cluster shares a prefix of the same prototype
  for (const auto& t : corpus) {
    const auto& ref = reference_task(corpus, t.cluster);
    EXPECT_TRUE(std::equal(t.target.begin(), t.target.end(), ref.target.begin()));
  }
}

TEST(InitialParams, ClusterCountMustMatch) {
  TrainConfig c = small_config(Method::vcrl);
  c.init_success = {0.5, 0.5};
  EXPECT_THROW(Trainer(c, small_corpus()), ConfigError);
}

TEST(Trainer, RejectsEmptyCorpusAndZeroSteps) {
  EXPECT_THROW(Trainer(small_config(Method::grpo), Corpus{}), ConfigError);
  TrainConfig c = small_config(Method::grpo);
  c.steps = 0;
  EXPECT_THROW(Trainer(c, small_corpus()), ConfigError);
}

TEST(Trainer, ShrinkPolicyTrace) {
  TrainConfig c = small_config(Method::vcrl);
  Trainer t(c, small_corpus());
  const auto out = t.step();
  int below = 0, in_batch = 0;
  for (const auto& g : out.groups) {
    EXPECT_EQ(g.source, GroupSource::corpus);
    below += g.p < 0.3;
    in_batch += g.in_batch;
  }
  EXPECT_EQ(out.metrics.groups_removed, below);
  EXPECT_EQ(out.metrics.bank_popped, 0);
  EXPECT_EQ(in_batch, c.batch_size - below);
  EXPECT_EQ(out.metrics.kappa, 0.3);
  EXPECT_EQ(out.metrics.mask_retained, in_batch);
  EXPECT_EQ(out.metrics.bank_pushed, in_batch);
  EXPECT_EQ(out.metrics.bank_size, in_batch);
}

TEST(Trainer, TopUpRefillsFromCorpusOnce) {
  TrainConfig c = small_config(Method::vcrl);
  c.shortfall = ShortfallPolicy::top_up_from_corpus;
  Trainer t(c, small_corpus());
  const auto out = t.step();
  int removed = 0, topped = 0, topped_kept = 0, corpus_kept = 0;
  for (const auto& g : out.groups) {
    if (g.source == GroupSource::corpus) {
      removed += !g.in_batch;
      corpus_kept += g.in_batch;
    } else {
      ASSERT_EQ(g.source, GroupSource::top_up);
      ++topped;
      topped_kept += g.in_batch;
      EXPECT_EQ(g.in_batch, g.p >= 0.3);
    }
  }
  EXPECT_EQ(topped, removed);
  EXPECT_EQ(out.metrics.mask_retained, corpus_kept + topped_kept);
}

TEST(Trainer, SaturatedPolicyGivesZeroUpdate) {
  for (Method m : {Method::grpo, Method::vcrl, Method::dapo, Method::gspo}) {
    TrainConfig c = small_config(m);
    c.init_success = {1e-12, 1e-12, 1e-12};
    c.init_noise = 0.0;
    Trainer t(c, small_corpus());
    const auto before = t.params();
    const auto out = t.step();
    EXPECT_TRUE(out.zero_update) << to_string(m);
    EXPECT_EQ(out.metrics.grad_norm, 0.0);
    EXPECT_EQ(out.metrics.mean_reward, 0.0);
    EXPECT_EQ(t.params(), before);
    if (m == Method::vcrl || m == Method::dapo) {
      EXPECT_EQ(out.metrics.mask_retained, 0);
    }
  }
}

TEST(Trainer, InvariantsOverARun) {
  TrainConfig c = small_config(Method::vcrl);
  c.steps = 60;
  Trainer t(c, small_corpus());
  for (int s = 1; s <= c.steps; ++s) {
    const auto out = t.step();
    const auto& m = out.metrics;
    EXPECT_EQ(m.step, s);
    EXPECT_EQ(m.kappa, s <= 20 ? 0.3 : 0.8);
    EXPECT_GE(m.mean_reward, 0.0);
    EXPECT_LE(m.mean_reward, 1.0);
    EXPECT_GE(m.grad_norm, 0.0);
    EXPECT_LE(m.bank_popped, m.groups_removed);
    EXPECT_LE(m.max_replay_count, 2);
    EXPECT_EQ(m.bank_size, static_cast<std::int64_t>(t.bank().size()));
    for (const auto& g : out.groups) {
      if (g.retained || (g.source == GroupSource::corpus && g.in_batch)) {
        EXPECT_GE(g.p, m.kappa);
      }
    }
    for (const auto& e : t.bank().snapshot()) EXPECT_LT(t.bank().replay_count(e.query_id), 2);
  }
}

TEST(Trainer, BaselinesDoNotUseTheBank) {
  for (Method m : {Method::grpo, Method::dapo, Method::gspo}) {
    Trainer t(small_config(m), small_corpus());
    for (int s = 0; s < 5; ++s) {
      const auto out = t.step();
      EXPECT_EQ(out.metrics.bank_size, 0);
      EXPECT_EQ(out.metrics.groups_removed, 0);
      EXPECT_EQ(out.metrics.kappa, 0.0);
    }
  }
}

TEST(Run, IdenticalSeedsGiveByteIdenticalStreams) {
  testutil::ScratchDir dir;
  const auto corpus = small_corpus();
  for (Method m : {Method::vcrl, Method::dapo}) {
    const auto c = small_config(m);
    const auto a = run(c, corpus, dir / ("a" + std::string(to_string(m))));
    const auto b = run(c, corpus, dir / ("b" + std::string(to_string(m))));
    EXPECT_EQ(testutil::slurp(a.paths.metrics()), testutil::slurp(b.paths.metrics()));
    EXPECT_EQ(a.final_checkpoint, b.final_checkpoint);
    EXPECT_EQ(a.metrics.size(), static_cast<std::size_t>(c.steps));
  }
}

TEST(Run, DifferentSeedsDiffer) {
  testutil::ScratchDir dir;
  auto c = small_config(Method::vcrl);
  const auto a = run(c, small_corpus(), dir / "a");
  c.rollout_seed += 1;
  const auto b = run(c, small_corpus(), dir / "b");
  EXPECT_NE(testutil::slurp(a.paths.metrics()), testutil::slurp(b.paths.metrics()));
}

TEST(Run, ResumeMatchesUninterrupted) {
  testutil::ScratchDir dir;
  const auto corpus = small_corpus();
  for (Method m : {Method::vcrl, Method::grpo}) {
    auto c = small_config(m);
    c.optimizer.kind = m == Method::grpo ? OptimizerKind::adaptive_moments : OptimizerKind::sgd;
    const auto full = run(c, corpus, dir / "full");
    // interrupted copy: keep artifacts up to the step-10 checkpoint, plus junk lines
    const auto part = dir / "part";
    std::filesystem::remove_all(part);
    auto shorter = c;
    shorter.steps = 17;
    run(shorter, corpus, part);
    RunOptions opts;
    opts.resume_from = RunPaths{part}.checkpoint_at(10);
    const auto resumed = run(c, corpus, part, opts);
    EXPECT_EQ(testutil::slurp(RunPaths{part}.metrics()), testutil::slurp(full.paths.metrics()));
    EXPECT_EQ(resumed.final_checkpoint, full.final_checkpoint);
  }
}

TEST(Checkpoint, JsonRoundTripIsExact) {
  testutil::ScratchDir dir;
  Trainer t(small_config(Method::vcrl), small_corpus());
  for (int i = 0; i < 5; ++i) t.step();
  const auto ck = t.checkpoint(5);
  save_checkpoint(ck, dir / "ck.json");
  EXPECT_EQ(load_checkpoint(dir / "ck.json"), ck);
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), IoError);
}

TEST(Run, ManifestMaterializesConfig) {
  testutil::ScratchDir dir;
  auto c = small_config(Method::gspo);
  c.steps = 3;
  RunOptions opts;
  opts.run_id = "x";
  opts.corpus_path = "corpus.jsonl";
  const auto res = run(c, small_corpus(), dir / "r", opts);
  const auto manifest = nlohmann::json::parse(testutil::slurp(res.paths.manifest()));
  EXPECT_EQ(manifest.at("run_id"), "x");
  EXPECT_EQ(manifest.at("artifact_version"), kArtifactVersion);
  for (const auto& [k, v] : config_pairs(c)) EXPECT_EQ(manifest.at("config").at(k), v) << k;
  // the written config file alone reproduces the run
  const auto again = resolve_config(read_config_file(res.paths.config().string()), {});
  EXPECT_EQ(config_pairs(again), config_pairs(c));
}
