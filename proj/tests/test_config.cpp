#include <cmath>
#include <fstream>
#include <map>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vcrl/config.hpp"
#include "vcrl/optimizer.hpp"

using namespace vcrl;

TEST(Kappa, DefaultSchedule) {
  const KappaSchedule s;
  EXPECT_EQ(kappa_at(1, s), 0.3);
  EXPECT_EQ(kappa_at(20, s), 0.3);
  EXPECT_EQ(kappa_at(21, s), 0.8);
  EXPECT_EQ(kappa_at(300, s), 0.8);
}

TEST(Kappa, ConstantSchedule) {
  const KappaSchedule s{0.5, 0, 0.5};
  for (int step = 1; step < 50; ++step) EXPECT_EQ(kappa_at(step, s), 0.5);
}

TEST(TrainConfig, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.method, Method::vcrl);
  EXPECT_EQ(c.batch_size, 32);
  EXPECT_EQ(c.group_size, 16);
  EXPECT_EQ(c.steps, 300);
  EXPECT_EQ(c.bank.momentum, 0.9);
  EXPECT_EQ(c.bank.max_replays, 2);
  EXPECT_EQ(c.clip(), ClipConfig::symmetric(0.2));
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, ClipFollowsMethod) {
  TrainConfig c;
  c.method = Method::dapo;
  EXPECT_EQ(c.clip(), ClipConfig::asymmetric(0.2, 0.28));
  c.method = Method::gspo;
  EXPECT_EQ(c.clip(), ClipConfig::sequence(0.0003));
}

TEST(TrainConfig, InvalidValuesAreConfigErrors) {
  auto bad = [](const std::string& key, const std::string& value) {
    TrainConfig c;
    apply_setting(c, key, value);
    c.validate();
  };
  EXPECT_THROW(bad("steps", "0"), ConfigError);
  EXPECT_THROW(bad("group_size", "1"), ConfigError);
  EXPECT_THROW(bad("batch_size", "0"), ConfigError);
  EXPECT_THROW(bad("momentum", "1.0"), ConfigError);
  EXPECT_THROW(bad("lr", "-1"), ConfigError);
  EXPECT_THROW(bad("method", "ppo"), ConfigError);
  EXPECT_THROW(bad("steps", "12abc"), ConfigError);
  EXPECT_THROW(bad("no_such_key", "1"), ConfigError);
}

TEST(ConfigText, RoundTripsThroughFile) {
  testutil::ScratchDir dir;
  TrainConfig c;
  c.method = Method::gspo;
  c.steps = 17;
  c.optimizer.lr = 0.123456789;
  c.bank.capacity = 64;
  c.init_success = {0.9, 0.4};
  c.shortfall = ShortfallPolicy::top_up_from_corpus;
  const auto path = (dir / "c.txt").string();
  write_config_file(c, path);
  const auto back = resolve_config(read_config_file(path), {});
  EXPECT_EQ(config_pairs(back), config_pairs(c));
  EXPECT_EQ(back.optimizer.lr, c.optimizer.lr);
}

TEST(ConfigText, CommentsAndBlankLines) {
  testutil::ScratchDir dir;
  const auto path = (dir / "c.txt").string();
  { std::ofstream(path) << "# header\n\n  steps = 9   # inline\nmethod=grpo\n"; }
  const auto m = read_config_file(path);
  EXPECT_EQ(m.at("steps"), "9");
  EXPECT_EQ(m.at("method"), "grpo");
  { std::ofstream(path) << "steps 9\n"; }
  EXPECT_THROW(read_config_file(path), ConfigError);
  EXPECT_THROW(read_config_file((dir / "missing").string()), IoError);
}

// Every combination of (default, file, flag) for a few keys: the flag wins
// over the file, the file over the default.
TEST(ConfigPrecedence, Matrix) {
  const std::map<std::string, std::pair<std::string, std::string>> keys = {
      {"steps", {"11", "22"}}, {"method", {"grpo", "dapo"}}, {"lr", {"0.5", "0.25"}},
      {"rollout_seed", {"5", "6"}}};
  const TrainConfig defaults;
  const auto default_pairs = config_pairs(defaults);
  auto lookup = [](const std::vector<std::pair<std::string, std::string>>& pairs, const std::string& k) {
    for (const auto& [key, v] : pairs) if (key == k) return v;
    return std::string();
  };
  for (int in_file = 0; in_file < 2; ++in_file) {
    for (int on_cli = 0; on_cli < 2; ++on_cli) {
      std::map<std::string, std::string> file, cli;
      for (const auto& [k, v] : keys) {
        if (in_file) file[k] = v.first;
        if (on_cli) cli[k] = v.second;
      }
      const auto resolved = config_pairs(resolve_config(file, cli));
      for (const auto& [k, v] : keys) {
        std::string expect = lookup(default_pairs, k);
        if (in_file) {
          TrainConfig t;
          apply_setting(t, k, v.first);
          expect = lookup(config_pairs(t), k);
        }
        if (on_cli) {
          TrainConfig t;
          apply_setting(t, k, v.second);
          expect = lookup(config_pairs(t), k);
        }
        EXPECT_EQ(lookup(resolved, k), expect) << k << " file=" << in_file << " cli=" << on_cli;
      }
    }
  }
}

TEST(Optimizer, SgdStepAndZeroGradient) {
  OptimizerConfig oc;
  oc.lr = 0.5;
  Optimizer opt(oc);
  PolicyParams theta(1, WorldShape{2, 1}, 1.0);
  PolicyParams g(1, WorldShape{2, 1});
  const auto before = theta;
  opt.ascend(theta, g);
  EXPECT_EQ(theta, before);
  g.at(0, 0, 1) = 2.0;
  opt.ascend(theta, g);
  EXPECT_EQ(theta.at(0, 0, 1), 2.0);
  EXPECT_EQ(theta.at(0, 0, 0), 1.0);
}

TEST(Optimizer, AdaptiveFirstStepIsSignedLr) {
  OptimizerConfig oc;
  oc.kind = OptimizerKind::adaptive_moments;
  oc.lr = 0.01;
  Optimizer opt(oc);
  PolicyParams theta(1, WorldShape{2, 1});
  PolicyParams g(1, WorldShape{2, 1});
  g.at(0, 0, 0) = 3.0;
  g.at(0, 0, 1) = -0.5;
  opt.ascend(theta, g);
  EXPECT_NEAR(theta.at(0, 0, 0), 0.01, 1e-9);
  EXPECT_NEAR(theta.at(0, 0, 1), -0.01, 1e-9);
  EXPECT_EQ(theta.at(0, 0, 2), 0.0);
  EXPECT_EQ(opt.state().t, 1);
  // zero gradient: moments advance, parameters stay put
  const auto before = theta;
  opt.ascend(theta, PolicyParams(1, WorldShape{2, 1}));
  EXPECT_EQ(theta, before);
  EXPECT_EQ(opt.state().t, 2);
}
