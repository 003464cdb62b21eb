#pragma once

// Seeded generators of small random worlds and rollout batches for the
// property checks.

#include <cstdint>
#include <random>
#include <vector>

#include "vcrl/objectives.hpp"
#include "vcrl/rollout_env.hpp"

namespace vcrl::fixtures {

inline double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline PolicyParams random_params(std::mt19937_64& rng, int clusters, WorldShape shape,
                                  double scale = 1.0) {
  PolicyParams p(clusters, shape);
  for (double& v : p.values()) v = scale * gaussian(rng);
  return p;
}

inline PolicyParams perturbed(const PolicyParams& base, std::mt19937_64& rng, double scale) {
  PolicyParams p = base;
  for (double& v : p.values()) v += scale * gaussian(rng);
  return p;
}

struct BatchSpec {
  int min_groups = 2;
  int max_groups = 4;
  int group_size = 4;
  int clusters = 2;
  WorldShape shape{3, 3};
  // Replace verifier rewards with Bernoulli(0.5) draws so advantages are
  // rarely degenerate; group 0 is always forced to be mixed.
  bool random_rewards = true;
};

inline RolloutBatch random_batch(std::mt19937_64& rng, const PolicyParams& params_old,
                                 const BatchSpec& spec) {
  RolloutBatch batch;
  const int n = spec.min_groups +
                static_cast<int>(rng() % static_cast<std::uint64_t>(spec.max_groups - spec.min_groups + 1));
  for (int g = 0; g < n; ++g) {
    SyntheticTask task;
    task.id = QueryId{static_cast<std::uint32_t>(g)};
    task.cluster = static_cast<int>(rng() % static_cast<std::uint64_t>(spec.clusters));
    const int len = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(spec.shape.max_len));
    for (int t = 0; t < len; ++t) {
      task.target.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(spec.shape.vocab)));
    }
    auto rollouts = sample_group(params_old, task, spec.group_size, rng());
    if (spec.random_rewards) {
      for (auto& r : rollouts) r.reward = (rng() & 1u) ? 1.0 : 0.0;
      if (g == 0) {
        rollouts[0].reward = 1.0;
        rollouts[1].reward = 0.0;
      }
    }
    batch.groups.push_back(make_group(std::move(task), std::move(rollouts)));
  }
  return batch;
}

// Distance of the closest importance ratio to a clip edge, over token ratios
// (sequence = false) or sequence ratios (sequence = true).
inline double clip_margin(const RolloutBatch& batch, const PolicyParams& params_new,
                          double low, double high, bool sequence) {
  double margin = 1e300;
  auto consider = [&](double r) {
    margin = std::min({margin, std::abs(r - (1.0 - low)), std::abs(r - (1.0 + high))});
  };
  for (const auto& g : batch.groups) {
    for (const auto& roll : g.rollouts) {
      if (sequence) {
        consider(sequence_ratio(params_new, g.task, roll));
        continue;
      }
      for (std::size_t t = 0; t < roll.tokens.size(); ++t) {
        consider(token_ratio(params_new, roll.logprobs_old[t], g.task, roll.tokens[t],
                             static_cast<int>(t)));
      }
    }
  }
  return margin;
}

}  // namespace vcrl::fixtures
