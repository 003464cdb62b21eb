#pragma once

// Replay store for high-p queries.
//
// Entries carry a priority P, a staleness counter beta (steps since last
// access) and a lifetime replay count. Pops are deterministic top-M by
// priority with FIFO tie-breaking; each tick applies
//
//   beta <- beta + 1
//   P    <- alpha * P + (1 - alpha) * beta
//
// to every resident entry, in that order.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vcrl/errors.hpp"
#include "vcrl/types.hpp"

namespace vcrl {

struct MemoryEntry {
  QueryId query_id{};
  double priority = 0.0;
  std::int64_t staleness = 0;
  int replay_count = 0;
  std::uint64_t insertion_seq = 0;

  friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

struct BankConfig {
  double momentum = 0.9;
  int max_replays = 2;
  std::optional<std::size_t> capacity;

  void validate() const {
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw ConfigError("bank momentum must lie in [0, 1), got " +
                        std::to_string(momentum));
    }
    if (max_replays < 1) {
      throw ConfigError("bank max_replays must be >= 1");
    }
    if (capacity && *capacity == 0) {
      throw ConfigError("bank capacity must be positive when set");
    }
  }
};

// Everything needed to rebuild a bank bit-for-bit.
struct BankState {
  std::vector<MemoryEntry> entries;
  std::vector<std::pair<QueryId, int>> replay_counts;  // lifetime, by query
  std::uint64_t next_seq = 0;

  friend bool operator==(const BankState&, const BankState&) = default;
};

class MemoryBank {
 public:
  MemoryBank() : MemoryBank(BankConfig{}) {}

  explicit MemoryBank(BankConfig config) : config_(config) { config_.validate(); }

  const BankConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  // Inserts or refreshes `id` with priority p and zero staleness. Returns
  // false when the query has exhausted its replays or the bank is full of
  // higher-priority entries. The caller is responsible for the kappa check.
  bool push(QueryId id, double p) {
    if (replay_count(id) >= config_.max_replays) return false;

    if (auto it = find(id); it != entries_.end()) {
      it->priority = p;
      it->staleness = 0;
      return true;
    }

    if (config_.capacity && entries_.size() >= *config_.capacity) {
      // Evict whichever entry would pop last.
      auto victim = std::max_element(entries_.begin(), entries_.end(), pops_before);
      if (p < victim->priority) return false;
      entries_.erase(victim);
    }

    entries_.push_back(MemoryEntry{id, p, 0, replay_count(id), next_seq_++});
    return true;
  }

  // Removes and returns up to `count` queries in descending priority order,
  // ties resolved by insertion order. Each returned query's lifetime replay
  // count goes up by one.
  std::vector<QueryId> pop_batch(std::size_t count) {
    const std::size_t n = std::min(count, entries_.size());
    std::stable_sort(entries_.begin(), entries_.end(), pops_before);
    std::vector<QueryId> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const QueryId id = entries_[i].query_id;
      ++replays_[id];
      out.push_back(id);
    }
    entries_.erase(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  void tick() { tick(config_.momentum); }

  void tick(double alpha) {
    for (auto& e : entries_) {
      e.staleness += 1;
      e.priority = alpha * e.priority + (1.0 - alpha) * static_cast<double>(e.staleness);
    }
  }

  // Entries in pop order.
  std::vector<MemoryEntry> snapshot() const {
    std::vector<MemoryEntry> out = entries_;
    std::stable_sort(out.begin(), out.end(), pops_before);
    return out;
  }

  int replay_count(QueryId id) const {
    auto it = replays_.find(id);
    return it == replays_.end() ? 0 : it->second;
  }

  bool contains(QueryId id) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [id](const MemoryEntry& e) { return e.query_id == id; });
  }

  int max_replay_count() const {
    int m = 0;
    for (const auto& [id, n] : replays_) m = std::max(m, n);
    return m;
  }

  BankState state() const {
    BankState s;
    s.entries = entries_;
    s.replay_counts.assign(replays_.begin(), replays_.end());
    s.next_seq = next_seq_;
    return s;
  }

  static MemoryBank from_state(BankConfig config, const BankState& s) {
    MemoryBank bank(config);
    bank.entries_ = s.entries;
    for (const auto& [id, n] : s.replay_counts) bank.replays_[id] = n;
    bank.next_seq_ = s.next_seq;
    return bank;
  }

 private:
  static bool pops_before(const MemoryEntry& a, const MemoryEntry& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.insertion_seq < b.insertion_seq;
  }

  std::vector<MemoryEntry>::iterator find(QueryId id) {
    return std::find_if(entries_.begin(), entries_.end(),
                        [id](const MemoryEntry& e) { return e.query_id == id; });
  }

  BankConfig config_;
  std::vector<MemoryEntry> entries_;
  std::map<QueryId, int> replays_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace vcrl
