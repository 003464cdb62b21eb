#pragma once

// Synthetic verifiable-reward world.
//
// A task asks for an exact token sequence. The policy is a table of logits
// indexed by (cluster, position, category) where category `vocab` is the
// end-of-sequence token. Because the policy ignores previous tokens, the
// probability that a sampled rollout is verified correct has a closed form,
// which the tests use as the oracle for every reward statistic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vcrl/errors.hpp"
#include "vcrl/types.hpp"

namespace vcrl {

struct WorldShape {
  int vocab = 8;     // non-EOS tokens; EOS is index `vocab`
  int max_len = 12;  // longest allowed target

  int eos() const noexcept { return vocab; }
  int categories() const noexcept { return vocab + 1; }
  int positions() const noexcept { return max_len + 1; }

  void validate() const {
    if (vocab < 2) throw ConfigError("vocab must be >= 2");
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
  }

  friend bool operator==(const WorldShape&, const WorldShape&) = default;
};

struct SyntheticTask {
  QueryId id{};
  int cluster = 0;
  std::vector<int> target;

  friend bool operator==(const SyntheticTask&, const SyntheticTask&) = default;
};

// Dense (cluster, position, category) tensor. Used both for policy logits
// and for gradients with respect to them.
class PolicyParams {
 public:
  PolicyParams() = default;

  PolicyParams(int clusters, WorldShape shape, double fill = 0.0)
      : clusters_(clusters),
        positions_(shape.positions()),
        categories_(shape.categories()),
        data_(static_cast<std::size_t>(clusters) * shape.positions() *
                  shape.categories(),
              fill) {
    if (clusters < 1) throw ConfigError("need at least one cluster");
  }

  int clusters() const noexcept { return clusters_; }
  int positions() const noexcept { return positions_; }
  int categories() const noexcept { return categories_; }
  WorldShape shape() const noexcept { return {categories_ - 1, positions_ - 1}; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> row(int cluster, int position) {
    return {data_.data() + offset(cluster, position),
            static_cast<std::size_t>(categories_)};
  }
  std::span<const double> row(int cluster, int position) const {
    return {data_.data() + offset(cluster, position),
            static_cast<std::size_t>(categories_)};
  }

  double& at(int cluster, int position, int category) {
    return data_[offset(cluster, position) + static_cast<std::size_t>(category)];
  }
  double at(int cluster, int position, int category) const {
    return data_[offset(cluster, position) + static_cast<std::size_t>(category)];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const PolicyParams& o) const noexcept {
    return clusters_ == o.clusters_ && positions_ == o.positions_ &&
           categories_ == o.categories_;
  }

  PolicyParams& operator+=(const PolicyParams& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  std::size_t offset(int cluster, int position) const {
    return (static_cast<std::size_t>(cluster) * positions_ + position) *
           static_cast<std::size_t>(categories_);
  }

  int clusters_ = 0;
  int positions_ = 0;
  int categories_ = 0;
  std::vector<double> data_;
};

struct Rollout {
  QueryId query{};
  std::vector<int> tokens;
  std::vector<double> logprobs_old;  // one per emitted token
  double reward = 0.0;

  std::size_t length() const noexcept { return tokens.size(); }
};

// ---------------------------------------------------------------------------
// Random streams

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent generator keyed by a tuple of integers, e.g.
// (run seed, step, query, rollout index).
inline std::mt19937_64 make_stream(std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = 0x6A09E667F3BCC909ull;
  for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k));
  return std::mt19937_64(h);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// Categorical helpers

inline std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

inline double log_softmax_at(std::span<const double> logits, int index) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return logits[static_cast<std::size_t>(index)] - mx - std::log(z);
}

inline double categorical_entropy(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double log_z = std::log(z);
  double h = 0.0;
  for (double l : logits) {
    const double lp = l - mx - log_z;
    const double pr = std::exp(lp);
    if (pr > 0.0) h -= pr * lp;
  }
  return std::max(h, 0.0);
}

// Softmax and log-softmax of every position row of one cluster, computed
// once and shared by all rollouts of a group.
class ClusterTable {
 public:
  ClusterTable(const PolicyParams& params, int cluster)
      : categories_(static_cast<std::size_t>(params.categories())),
        probs_(static_cast<std::size_t>(params.positions()) * categories_),
        logprobs_(probs_.size()) {
    for (int t = 0; t < params.positions(); ++t) {
      const auto row = params.row(cluster, t);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double l : row) z += std::exp(l - mx);
      const double log_z = std::log(z);
      for (std::size_t v = 0; v < categories_; ++v) {
        const std::size_t i = static_cast<std::size_t>(t) * categories_ + v;
        probs_[i] = std::exp(row[v] - mx) / z;
        logprobs_[i] = row[v] - mx - log_z;
      }
    }
  }

  std::span<const double> probs(int position) const {
    return {probs_.data() + static_cast<std::size_t>(position) * categories_, categories_};
  }
  double logprob(int position, int token) const {
    return logprobs_[static_cast<std::size_t>(position) * categories_ +
                     static_cast<std::size_t>(token)];
  }

 private:
  std::size_t categories_;
  std::vector<double> probs_;
  std::vector<double> logprobs_;
};

// ---------------------------------------------------------------------------
// Oracle and environment operations

inline void require_task(const PolicyParams& params, const SyntheticTask& task) {
  const WorldShape shape = params.shape();
  if (task.cluster < 0 || task.cluster >= params.clusters()) {
    throw ConfigError("task " + to_string(task.id) + " has cluster " +
                      std::to_string(task.cluster) + " outside the policy table");
  }
  if (task.target.empty() ||
      static_cast<int>(task.target.size()) > shape.max_len) {
    throw ConfigError("task " + to_string(task.id) + " target length " +
                      std::to_string(task.target.size()) + " outside [1, " +
                      std::to_string(shape.max_len) + "]");
  }
  for (int tok : task.target) {
    if (tok < 0 || tok >= shape.vocab) {
      throw ConfigError("task " + to_string(task.id) + " has token " +
                        std::to_string(tok) + " outside the vocabulary");
    }
  }
}

// Exact probability that one sampled rollout is verified correct: the
// target path followed by EOS at position L.
inline double success_probability(const PolicyParams& params,
                                  const SyntheticTask& task) {
  require_task(params, task);
  double log_p = 0.0;
  const int L = static_cast<int>(task.target.size());
  for (int t = 0; t < L; ++t) {
    log_p += log_softmax_at(params.row(task.cluster, t), task.target[t]);
  }
  log_p += log_softmax_at(params.row(task.cluster, L), params.shape().eos());
  return std::exp(log_p);
}

// 1.0 iff tokens == target followed by EOS.
inline double verify(const SyntheticTask& task, std::span<const int> tokens,
                     int eos) {
  const std::size_t L = task.target.size();
  if (tokens.size() != L + 1 || tokens[L] != eos) return 0.0;
  return std::equal(task.target.begin(), task.target.end(), tokens.begin())
             ? 1.0
             : 0.0;
}

// Ancestral sampling at positions 0..max_len, stopping after EOS. A rollout
// that never emits EOS is truncated after max_len + 1 tokens.
inline Rollout sample_rollout(const PolicyParams& params, const ClusterTable& table,
                              const SyntheticTask& task, std::mt19937_64& rng) {
  const WorldShape shape = params.shape();
  Rollout r;
  r.query = task.id;
  for (int t = 0; t < shape.positions(); ++t) {
    const auto probs = table.probs(t);
    const double u = uniform01(rng);
    int tok = shape.categories() - 1;
    double cum = 0.0;
    for (int v = 0; v < shape.categories(); ++v) {
      cum += probs[static_cast<std::size_t>(v)];
      if (u < cum) {
        tok = v;
        break;
      }
    }
    r.tokens.push_back(tok);
    r.logprobs_old.push_back(table.logprob(t, tok));
    if (tok == shape.eos()) break;
  }
  r.reward = verify(task, r.tokens, shape.eos());
  return r;
}

// G independent rollouts; rollout i draws from stream (seed, i) so the
// result does not depend on evaluation order.
inline std::vector<Rollout> sample_group(const PolicyParams& params,
                                         const SyntheticTask& task, int group_size,
                                         std::uint64_t seed) {
  require_task(params, task);
  if (group_size < 2) {
    throw InvalidGroupError("group size must be >= 2, got " +
                            std::to_string(group_size));
  }
  std::vector<Rollout> out;
  out.reserve(static_cast<std::size_t>(group_size));
  const ClusterTable table(params, task.cluster);
  for (int i = 0; i < group_size; ++i) {
    auto rng = make_stream({seed, static_cast<std::uint64_t>(i)});
    out.push_back(sample_rollout(params, table, task, rng));
  }
  return out;
}

inline void require_emission(const PolicyParams& params, const SyntheticTask& task,
                             std::span<const int> tokens) {
  const WorldShape shape = params.shape();
  if (task.cluster < 0 || task.cluster >= params.clusters()) {
    throw InvalidRolloutError("cluster outside the policy table");
  }
  if (tokens.empty() || static_cast<int>(tokens.size()) > shape.positions()) {
    throw InvalidRolloutError("rollout length " + std::to_string(tokens.size()) +
                              " outside [1, " + std::to_string(shape.positions()) +
                              "]");
  }
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || tokens[t] >= shape.categories()) {
      throw InvalidRolloutError("token " + std::to_string(tokens[t]) +
                                " out of range at position " + std::to_string(t));
    }
    if (tokens[t] == shape.eos() && t + 1 != tokens.size()) {
      throw InvalidRolloutError("EOS before the end of the rollout");
    }
  }
}

// log pi(token | cluster, position) for every emitted token.
inline std::vector<double> token_logprobs(const PolicyParams& params,
                                          const SyntheticTask& task,
                                          std::span<const int> tokens) {
  require_emission(params, task, tokens);
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out[t] = log_softmax_at(params.row(task.cluster, static_cast<int>(t)), tokens[t]);
  }
  return out;
}

struct LogProbGrad {
  double logprob = 0.0;
  PolicyParams gradient;
};

// Total log-probability of the emission and its gradient with respect to the
// logits: (onehot(token) - softmax) on every emitted row, zero elsewhere.
inline LogProbGrad logprob_and_grad(const PolicyParams& params,
                                    const SyntheticTask& task,
                                    std::span<const int> tokens) {
  require_emission(params, task, tokens);
  LogProbGrad out{0.0, PolicyParams(params.clusters(), params.shape())};
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int pos = static_cast<int>(t);
    const auto row = params.row(task.cluster, pos);
    out.logprob += log_softmax_at(row, tokens[t]);
    const auto probs = softmax(row);
    auto g = out.gradient.row(task.cluster, pos);
    for (std::size_t v = 0; v < probs.size(); ++v) g[v] -= probs[v];
    g[static_cast<std::size_t>(tokens[t])] += 1.0;
  }
  return out;
}

// Mean categorical entropy over all positions 0..max_len of the task's cluster.
inline double policy_entropy(const PolicyParams& params, const SyntheticTask& task) {
  double h = 0.0;
  for (int t = 0; t < params.positions(); ++t) {
    h += categorical_entropy(params.row(task.cluster, t));
  }
  return h / params.positions();
}

// Mean entropy over the positions a rollout actually visited.
inline double rollout_entropy(const PolicyParams& params, int cluster,
                              const Rollout& rollout) {
  if (rollout.tokens.empty()) return 0.0;
  double h = 0.0;
  for (std::size_t t = 0; t < rollout.tokens.size(); ++t) {
    h += categorical_entropy(params.row(cluster, static_cast<int>(t)));
  }
  return h / static_cast<double>(rollout.tokens.size());
}

}  // namespace vcrl
