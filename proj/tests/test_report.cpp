#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vcrl/corpus.hpp"
#include "vcrl/oracles.hpp"
#include "vcrl/report.hpp"

using namespace vcrl;

namespace {

std::filesystem::path make_run(const testutil::ScratchDir& dir, const std::string& name, Method m,
                               std::int64_t steps) {
  TrainConfig c;
  c.method = m;
  c.batch_size = 8;
  c.group_size = 4;
  c.steps = steps;
  const auto corpus = gen_corpus(1, parse_cluster_specs("2:10,5:10,9:10"), WorldShape{});
  run(c, corpus, dir / name);
  return dir / name;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Compare, SummarySchemaOneRowPerRun) {
  testutil::ScratchDir dir;
  const auto a = make_run(dir, "v", Method::vcrl, 25);
  const auto b = make_run(dir, "g", Method::grpo, 25);
  const auto cmp = compare_runs({load_run(a), load_run(b)}, 20);
  const auto rows = lines(summary_csv(cmp));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "method,seed,final_reward_ma20,final_reward_std20,mean_grad_norm,mean_entropy");
  EXPECT_EQ(rows[1].rfind("vcrl,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("grpo,", 0), 0u);
  EXPECT_TRUE(cmp.warnings.empty());
}

TEST(Compare, SmoothingMatchesRecomputationFromStream) {
  testutil::ScratchDir dir;
  const auto a = make_run(dir, "v", Method::vcrl, 30);
  const auto b = make_run(dir, "g", Method::grpo, 30);
  const auto ra = load_run(a);
  const auto cmp = compare_runs({ra, load_run(b)}, 20);
  const auto reward = metric_series(ra.rows, "mean_reward");
  const auto ma = oracle::moving_average(reward, 20);
  const auto sd = oracle::rolling_std(reward, 20);
  EXPECT_NEAR(cmp.summary[0].final_reward_ma, ma.back(), 1e-12);
  EXPECT_NEAR(cmp.summary[0].final_reward_std, sd.back(), 1e-12);
  ASSERT_EQ(cmp.series_header[1], "v:mean_reward");
  for (std::size_t i = 0; i < cmp.steps; ++i) {
    EXPECT_NEAR(cmp.series_rows[i][1], ma[i], 1e-12);
  }
}

TEST(Compare, DifferentLengthsAlignToShorterWithWarning) {
  testutil::ScratchDir dir;
  const auto a = make_run(dir, "long", Method::vcrl, 12);
  const auto b = make_run(dir, "short", Method::grpo, 7);
  const auto cmp = compare_runs({load_run(a), load_run(b)}, 20);
  EXPECT_EQ(cmp.steps, 7u);
  EXPECT_EQ(cmp.series_rows.size(), 7u);
  ASSERT_EQ(cmp.warnings.size(), 1u);
  EXPECT_NE(cmp.warnings[0].find("long"), std::string::npos);
}

TEST(Compare, WindowOnePassesRawSeries) {
  testutil::ScratchDir dir;
  const auto a = make_run(dir, "v", Method::vcrl, 10);
  const auto b = make_run(dir, "g", Method::grpo, 10);
  const auto ra = load_run(a);
  const auto cmp = compare_runs({ra, load_run(b)}, 1);
  const auto raw = metric_series(ra.rows, "mean_reward");
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_EQ(cmp.series_rows[i][1], raw[i]);
}

TEST(Compare, NeedsTwoRuns) {
  testutil::ScratchDir dir;
  const auto a = make_run(dir, "v", Method::vcrl, 3);
  EXPECT_THROW(compare_runs({load_run(a)}, 20), ConfigError);
  EXPECT_THROW(load_run(dir / "nothing"), IoError);
}

TEST(Export, OneRowPerStepWithSmoothedColumns) {
  testutil::ScratchDir dir;
  const auto a = make_run(dir, "v", Method::vcrl, 6);
  const auto rows = lines(export_csv(load_run(a), 20));
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0].rfind("step,mean_reward,mean_reward_ma,mean_reward_std,", 0), 0u);
  EXPECT_EQ(rows[1].rfind("1,", 0), 0u);
}
