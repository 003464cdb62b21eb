#pragma once

// One training run: batch sampling, group rollouts, variance filtering,
// replay from the memory bank, objective evaluation and the ascent step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vcrl/config.hpp"
#include "vcrl/corpus.hpp"
#include "vcrl/errors.hpp"
#include "vcrl/memory_bank.hpp"
#include "vcrl/metrics.hpp"
#include "vcrl/objectives.hpp"
#include "vcrl/optimizer.hpp"
#include "vcrl/rollout_env.hpp"

namespace vcrl {

// Stream tags; every random draw is keyed by (seed, tag, step, ...).
inline constexpr std::uint64_t kStreamBatch = 1;
inline constexpr std::uint64_t kStreamRollout = 2;
inline constexpr std::uint64_t kStreamTopUp = 3;
inline constexpr std::uint64_t kStreamInit = 4;

enum class GroupSource { corpus, bank, top_up };

struct GroupRecord {
  QueryId query{};
  int cluster = 0;
  int successes = 0;
  double p = 0.0;
  GroupSource source = GroupSource::corpus;
  bool in_batch = false;  // survived the kappa filter into the update batch
  bool retained = false;  // contributed to the objective (mask = 1)
};

struct StepOutcome {
  StepMetrics metrics;
  std::vector<GroupRecord> groups;
  bool zero_update = false;
};

struct Checkpoint {
  std::int64_t step = 0;
  PolicyParams params;
  OptimizerState optimizer;
  BankState bank;
  std::int64_t metrics_lines = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Path followed by the calibration bias: the cluster's first task plus EOS.
inline const SyntheticTask& reference_task(const Corpus& corpus, int cluster) {
  for (const auto& t : corpus) {
    if (t.cluster == cluster) return t;
  }
  throw ConfigError("cluster " + std::to_string(cluster) + " has no tasks");
}

// Small Gaussian noise on every logit, then, per cluster, a bias of strength
// a on the reference path with a solved by bisection so that the exact
// success probability of the reference task equals init_success[cluster].
inline PolicyParams initial_params(const Corpus& corpus, const TrainConfig& config) {
  const int clusters = cluster_count(corpus);
  PolicyParams params(clusters, config.world);
  if (config.init_noise > 0.0) {
    auto rng = make_stream({config.init_seed, kStreamInit});
    auto vals = params.values();
    for (std::size_t i = 0; i < vals.size(); i += 2) {
      const double u1 = 1.0 - uniform01(rng);
      const double u2 = uniform01(rng);
      const double r = std::sqrt(-2.0 * std::log(u1));
      vals[i] = config.init_noise * r * std::cos(2.0 * std::numbers::pi * u2);
      if (i + 1 < vals.size()) {
        vals[i + 1] = config.init_noise * r * std::sin(2.0 * std::numbers::pi * u2);
      }
    }
  }
  if (config.init_success.empty()) return params;
  if (static_cast<int>(config.init_success.size()) != clusters) {
    throw ConfigError("init_success has " + std::to_string(config.init_success.size()) +
                      " entries for " + std::to_string(clusters) + " clusters");
  }
  const int eos = config.world.eos();
  for (int c = 0; c < clusters; ++c) {
    const auto& task = reference_task(corpus, c);
    const int L = static_cast<int>(task.target.size());
    auto path_token = [&](int t) { return t < L ? task.target[static_cast<std::size_t>(t)] : eos; };
    const PolicyParams base = params;
    auto with_bias = [&](double a) {
      PolicyParams p = base;
      for (int t = 0; t <= L; ++t) p.at(c, t, path_token(t)) += a;
      return p;
    };
    double lo = -60.0;
    double hi = 60.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (success_probability(with_bias(mid), task) < config.init_success[c]) lo = mid;
      else hi = mid;
    }
    params = with_bias(0.5 * (lo + hi));
  }
  return params;
}

class Trainer {
 public:
  Trainer(TrainConfig config, Corpus corpus)
      : config_(std::move(config)),
        corpus_(std::move(corpus)),
        bank_(config_.bank),
        optimizer_(config_.optimizer) {
    config_.validate();
    validate_corpus(corpus_, config_.world);
    for (std::size_t i = 0; i < corpus_.size(); ++i) index_[to_index(corpus_[i].id)] = i;
    params_ = initial_params(corpus_, config_);
  }

  static Trainer resume(TrainConfig config, Corpus corpus, const Checkpoint& ckpt) {
    Trainer t(std::move(config), std::move(corpus));
    if (!ckpt.params.same_shape(t.params_)) {
      throw ConfigError("checkpoint parameters do not match the configured world");
    }
    t.step_ = ckpt.step;
    t.params_ = ckpt.params;
    t.optimizer_.set_state(ckpt.optimizer);
    t.bank_ = MemoryBank::from_state(t.config_.bank, ckpt.bank);
    return t;
  }

  const TrainConfig& config() const noexcept { return config_; }
  const Corpus& corpus() const noexcept { return corpus_; }
  const PolicyParams& params() const noexcept { return params_; }
  const MemoryBank& bank() const noexcept { return bank_; }
  std::int64_t completed_steps() const noexcept { return step_; }

  Checkpoint checkpoint(std::int64_t metrics_lines) const {
    return Checkpoint{step_, params_, optimizer_.state(), bank_.state(), metrics_lines};
  }

  StepOutcome step() {
    const std::int64_t step = step_ + 1;
    const bool vcrl = config_.method == Method::vcrl;
    const double kappa = vcrl ? kappa_at(step, config_.kappa) : 0.0;
    StepOutcome out;
    StepMetrics& m = out.metrics;
    m.step = step;
    m.kappa = kappa;

    // (1)-(3) fresh corpus queries, rolled out under the current snapshot.
    const auto chosen = sample_queries(step);
    std::vector<RolloutGroup> fresh;
    fresh.reserve(chosen.size());
    for (std::size_t idx : chosen) {
      fresh.push_back(rollout(corpus_[idx], step, kStreamRollout, 0));
    }
    record_dynamics(fresh, m);

    RolloutBatch batch;
    batch.kappa = kappa;
    std::vector<GroupSource> sources;
    auto add_record = [&](const RolloutGroup& g, GroupSource src, bool in_batch) {
      out.groups.push_back(GroupRecord{g.task.id, g.task.cluster, g.successes, g.p, src,
                                       in_batch, false});
    };

    if (!vcrl) {
      for (auto& g : fresh) {
        add_record(g, GroupSource::corpus, true);
        sources.push_back(GroupSource::corpus);
        batch.groups.push_back(std::move(g));
      }
    } else {
      // (4) variance filter.
      std::int64_t removed = 0;
      for (auto& g : fresh) {
        const bool keep = g.p >= kappa;
        add_record(g, GroupSource::corpus, keep);
        if (keep) {
          sources.push_back(GroupSource::corpus);
          batch.groups.push_back(std::move(g));
        } else {
          ++removed;
        }
      }
      m.groups_removed = removed;

      // (5) replay from the bank with fresh rollouts.
      const auto popped = bank_.pop_batch(static_cast<std::size_t>(removed));
      m.bank_popped = static_cast<std::int64_t>(popped.size());
      for (QueryId id : popped) {
        auto g = rollout(corpus_[index_.at(to_index(id))], step, kStreamRollout, 1);
        add_record(g, GroupSource::bank, true);
        sources.push_back(GroupSource::bank);
        batch.groups.push_back(std::move(g));
      }

      const auto shortfall = static_cast<std::size_t>(removed) - popped.size();
      if (config_.shortfall == ShortfallPolicy::top_up_from_corpus && shortfall > 0) {
        for (std::size_t idx : sample_top_up(step, chosen, shortfall)) {
          auto g = rollout(corpus_[idx], step, kStreamRollout, 2);
          const bool keep = g.p >= kappa;
          add_record(g, GroupSource::top_up, keep);
          if (keep) {
            sources.push_back(GroupSource::top_up);
            batch.groups.push_back(std::move(g));
          }
        }
      }

      // (6) age everything still resident.
      bank_.tick();
    }

    // (7) objective and one ascent step.
    PolicyParams grad(params_.clusters(), params_.shape());
    if (!batch.empty()) {
      try {
        auto res = evaluate_objective(config_.method, batch, params_, config_.clip(), kappa);
        m.objective_value = res.value;
        m.mask_retained = res.retained;
        grad = std::move(res.gradient);
        std::size_t bi = 0;
        for (auto& rec : out.groups) {
          if (rec.in_batch) rec.retained = res.mask[bi++];
        }
      } catch (const EmptyAfterFilterError&) {
        m.mask_retained = 0;
      }
    }
    m.grad_norm = grad_norm(grad.values());
    out.zero_update = m.grad_norm == 0.0;
    optimizer_.ascend(params_, grad);

    // (8) bank pushes reuse this step's pre-update p.
    if (vcrl) {
      for (const auto& g : batch.groups) {
        if (g.p >= kappa && bank_.push(g.task.id, g.p)) ++m.bank_pushed;
      }
    }
    m.bank_size = static_cast<std::int64_t>(bank_.size());
    m.max_replay_count = bank_.max_replay_count();
    step_ = step;
    return out;
  }

 private:
  RolloutGroup rollout(const SyntheticTask& task, std::int64_t step, std::uint64_t tag,
                       std::uint64_t phase) const {
    auto rng = make_stream({config_.rollout_seed, tag, static_cast<std::uint64_t>(step),
                            to_index(task.id), phase});
    return make_group(task, sample_group(params_, task, config_.group_size, rng()));
  }

  // Uniform sample of min(B, N) distinct corpus indices.
  std::vector<std::size_t> sample_queries(std::int64_t step) const {
    std::vector<std::size_t> idx(corpus_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto rng = make_stream({config_.rollout_seed, kStreamBatch, static_cast<std::uint64_t>(step)});
    const std::size_t n = std::min(idx.size(), static_cast<std::size_t>(config_.batch_size));
    partial_shuffle(idx, n, rng);
    idx.resize(n);
    return idx;
  }

  std::vector<std::size_t> sample_top_up(std::int64_t step, const std::vector<std::size_t>& taken,
                                         std::size_t count) const {
    const std::unordered_set<std::size_t> used(taken.begin(), taken.end());
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < corpus_.size(); ++i) {
      if (!used.count(i)) pool.push_back(i);
    }
    auto rng = make_stream({config_.rollout_seed, kStreamTopUp, static_cast<std::uint64_t>(step)});
    const std::size_t n = std::min(pool.size(), count);
    partial_shuffle(pool, n, rng);
    pool.resize(n);
    return pool;
  }

  static void partial_shuffle(std::vector<std::size_t>& v, std::size_t n, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (v.size() - i));
      std::swap(v[i], v[j]);
    }
  }

  // Reward, length and entropy over the uniformly sampled corpus groups, so
  // every method is measured on the same distribution.
  void record_dynamics(const std::vector<RolloutGroup>& groups, StepMetrics& m) const {
    double reward = 0.0;
    double length = 0.0;
    double entropy = 0.0;
    std::size_t n = 0;
    // entropy of each (cluster, position) row, filled on first use
    std::vector<double> row_entropy(
        static_cast<std::size_t>(params_.clusters() * params_.positions()), -1.0);
    for (const auto& g : groups) {
      for (const auto& r : g.rollouts) {
        reward += r.reward;
        length += static_cast<double>(r.tokens.size());
        double h = 0.0;
        for (std::size_t t = 0; t < r.tokens.size(); ++t) {
          auto& cell = row_entropy[static_cast<std::size_t>(g.task.cluster * params_.positions()) + t];
          if (cell < 0.0) cell = categorical_entropy(params_.row(g.task.cluster, static_cast<int>(t)));
          h += cell;
        }
        entropy += h / static_cast<double>(r.tokens.size());
        ++n;
      }
    }
    if (n == 0) return;
    m.mean_reward = reward / static_cast<double>(n);
    m.mean_response_length = length / static_cast<double>(n);
    m.mean_entropy = entropy / static_cast<double>(n);
  }

  TrainConfig config_;
  Corpus corpus_;
  std::unordered_map<std::uint32_t, std::size_t> index_;
  PolicyParams params_;
  MemoryBank bank_;
  Optimizer optimizer_;
  std::int64_t step_ = 0;
};

}  // namespace vcrl
