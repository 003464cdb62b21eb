#include <algorithm>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "vcrl/memory_bank.hpp"
#include "vcrl/oracles.hpp"
#include "vcrl/rollout_env.hpp"

using namespace vcrl;

namespace {

const QueryId a{1}, b{2}, c{3}, q7{7};

MemoryBank bank_with(std::vector<MemoryEntry> entries, BankConfig cfg = {}) {
  BankState s;
  s.entries = std::move(entries);
  std::uint64_t seq = 0;
  for (const auto& e : s.entries) seq = std::max(seq, e.insertion_seq + 1);
  s.next_seq = seq;
  return MemoryBank::from_state(cfg, s);
}

}  // namespace

TEST(BankPush, InsertsFreshEntry) {
  MemoryBank bank;
  EXPECT_TRUE(bank.push(q7, 0.75));
  const auto snap = bank.snapshot();
  ASSERT_EQ(snap.size(), 1u);
  EXPECT_EQ(snap[0].query_id, q7);
  EXPECT_EQ(snap[0].priority, 0.75);
  EXPECT_EQ(snap[0].staleness, 0);
}

TEST(BankPush, RejectsAfterReplayCap) {
  MemoryBank bank;
  for (int i = 0; i < 2; ++i) {
    ASSERT_TRUE(bank.push(q7, 0.9));
    ASSERT_EQ(bank.pop_batch(1), std::vector<QueryId>{q7});
  }
  EXPECT_EQ(bank.replay_count(q7), 2);
  EXPECT_FALSE(bank.push(q7, 0.9));
  EXPECT_TRUE(bank.empty());
}

TEST(BankPush, RefreshesExistingEntry) {
  auto bank = bank_with({{q7, 0.5, 3, 0, 0}, {a, 0.7, 1, 0, 1}});
  EXPECT_TRUE(bank.push(q7, 0.8));
  EXPECT_EQ(bank.size(), 2u);
  for (const auto& e : bank.snapshot()) {
    if (e.query_id == q7) {
      EXPECT_EQ(e.priority, 0.8);
      EXPECT_EQ(e.staleness, 0);
    }
  }
}

TEST(BankPop, HighestPriorityFirst) {
  auto bank = bank_with({{a, 0.975, 0, 0, 0}, {b, 0.6, 0, 0, 1}, {c, 0.9, 0, 0, 2}});
  EXPECT_EQ(bank.pop_batch(2), (std::vector<QueryId>{a, c}));
  EXPECT_EQ(bank.size(), 1u);
  EXPECT_EQ(bank.replay_count(a), 1);
  EXPECT_EQ(bank.replay_count(c), 1);
  EXPECT_EQ(bank.replay_count(b), 0);
}

TEST(BankPop, EmptyBankReturnsNothing) {
  MemoryBank bank;
  EXPECT_TRUE(bank.pop_batch(3).empty());
}

TEST(BankPop, TiesAreFifo) {
  auto bank = bank_with({{b, 0.5, 0, 0, 2}, {a, 0.5, 0, 0, 1}});
  EXPECT_EQ(bank.pop_batch(1), std::vector<QueryId>{a});
}

TEST(BankPop, ShortListWhenBankIsSmall) {
  MemoryBank bank;
  bank.push(a, 0.9);
  EXPECT_EQ(bank.pop_batch(5).size(), 1u);
}

TEST(BankTick, MomentumExamples) {
  auto bank = bank_with({{a, 0.75, 2, 0, 0}, {b, 0.0, 0, 0, 1}});
  bank.tick(0.9);
  for (const auto& e : bank.snapshot()) {
    if (e.query_id == a) {
      EXPECT_EQ(e.staleness, 3);
      EXPECT_NEAR(e.priority, 0.975, 1e-15);
    } else {
      EXPECT_EQ(e.staleness, 1);
      EXPECT_NEAR(e.priority, 0.1, 1e-15);
    }
  }
}

TEST(BankTick, RecurrenceMatchesClosedSum) {
  auto rng = make_stream({3});
  for (int trial = 0; trial < 50; ++trial) {
    const double p0 = uniform01(rng);
    const double alpha = 0.99 * uniform01(rng);
    MemoryBank bank(BankConfig{alpha, 2, {}});
    bank.push(a, p0);
    for (int n = 1; n <= 60; ++n) {
      bank.tick();
      EXPECT_NEAR(bank.snapshot()[0].priority, oracle::priority_after(p0, alpha, n), 1e-12);
      EXPECT_EQ(bank.snapshot()[0].staleness, n);
    }
  }
}

TEST(BankSnapshot, ShowsStalenessAfterTick) {
  MemoryBank bank;
  EXPECT_TRUE(bank.snapshot().empty());
  bank.push(a, 0.9);
  bank.push(b, 0.85);
  for (const auto& e : bank.snapshot()) EXPECT_EQ(e.staleness, 0);
  bank.tick(0.9);
  for (const auto& e : bank.snapshot()) EXPECT_EQ(e.staleness, 1);
}

TEST(BankConfig, RejectsOutOfDomainValues) {
  EXPECT_THROW(MemoryBank(BankConfig{1.0, 2, {}}), ConfigError);
  EXPECT_THROW(MemoryBank(BankConfig{-0.1, 2, {}}), ConfigError);
  EXPECT_THROW(MemoryBank(BankConfig{0.9, 0, {}}), ConfigError);
  EXPECT_THROW(MemoryBank(BankConfig{0.9, 2, std::size_t{0}}), ConfigError);
}

TEST(BankCapacity, EvictsTheEntryThatWouldPopLast) {
  MemoryBank bank(BankConfig{0.9, 2, std::size_t{2}});
  bank.push(a, 0.9);
  bank.push(b, 0.5);
  EXPECT_FALSE(bank.push(c, 0.4));
  EXPECT_TRUE(bank.push(c, 0.7));
  EXPECT_TRUE(bank.contains(a));
  EXPECT_FALSE(bank.contains(b));
  EXPECT_TRUE(bank.contains(c));
}

TEST(BankState, RoundTripIsExact) {
  MemoryBank bank;
  bank.push(a, 0.9);
  bank.push(b, 0.8);
  bank.pop_batch(1);
  bank.tick();
  bank.push(c, 0.95);
  const auto restored = MemoryBank::from_state(bank.config(), bank.state());
  EXPECT_EQ(restored.state(), bank.state());
  EXPECT_EQ(restored.snapshot(), bank.snapshot());
}

// Random push/pop/tick traffic against a brute-force model of the bank.
TEST(BankProperty, MatchesReferenceModel) {
  struct Ref { QueryId id; double p; std::int64_t beta; std::uint64_t seq; };
  auto rng = make_stream({17});
  for (int trial = 0; trial < 50; ++trial) {
    MemoryBank bank;
    std::vector<Ref> ref;
    std::map<QueryId, int> pops;
    std::uint64_t seq = 0;
    for (int op = 0; op < 200; ++op) {
      const auto kind = rng() % 3;
      if (kind == 0) {
        const QueryId id{static_cast<std::uint32_t>(rng() % 12)};
        const double p = static_cast<double>(rng() % 5) / 4.0;
        bool expect = pops[id] < 2;
        if (expect) {
          auto it = std::find_if(ref.begin(), ref.end(), [&](const Ref& r) { return r.id == id; });
          if (it != ref.end()) { it->p = p; it->beta = 0; }
          else ref.push_back({id, p, 0, seq++});
        }
        EXPECT_EQ(bank.push(id, p), expect);
      } else if (kind == 1) {
        const std::size_t m = rng() % 4;
        std::stable_sort(ref.begin(), ref.end(), [](const Ref& x, const Ref& y) {
          return x.p != y.p ? x.p > y.p : x.seq < y.seq;
        });
        std::vector<QueryId> expect;
        for (std::size_t i = 0; i < std::min(m, ref.size()); ++i) {
          expect.push_back(ref[i].id);
          ++pops[ref[i].id];
        }
        ref.erase(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(expect.size()));
        EXPECT_EQ(bank.pop_batch(m), expect);
      } else {
        for (auto& r : ref) { r.beta += 1; r.p = 0.9 * r.p + 0.1 * static_cast<double>(r.beta); }
        bank.tick();
      }
      EXPECT_EQ(bank.size(), ref.size());
      EXPECT_LE(bank.max_replay_count(), 2);
    }
  }
}
