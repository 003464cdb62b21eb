#pragma once

// Statistics of one rollout group's rewards: sample variance, its maximum,
// the normalized difficulty score p and the empirical outcome gap.
//
// Rewards live in [0, 1]. When every reward is exactly 0.0 or 1.0 the
// closed forms in the success count k are used; otherwise the general
// sample-variance path runs and p is clamped into [0, 1].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "vcrl/errors.hpp"

namespace vcrl {

struct GroupDifficulty {
  double variance = 0.0;
  double variance_max = 0.0;
  double p = 0.0;
  double outcome_gap = 0.0;  // only meaningful for binary groups
  bool binary = false;
  int successes = 0;         // k; only meaningful for binary groups
};

namespace detail {

inline void require_group(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw InvalidGroupError("reward group needs at least 2 entries, got " +
                            std::to_string(rewards.size()));
  }
  for (double r : rewards) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw InvalidGroupError("reward outside [0, 1]: " + std::to_string(r));
    }
  }
}

}  // namespace detail

inline bool is_binary(std::span<const double> rewards) {
  return std::all_of(rewards.begin(), rewards.end(),
                     [](double r) { return r == 0.0 || r == 1.0; });
}

// Number of rewards exactly equal to 1.0.
inline int success_count(std::span<const double> rewards) {
  return static_cast<int>(
      std::count(rewards.begin(), rewards.end(), 1.0));
}

inline double max_group_variance(int group_size) {
  if (group_size < 2) {
    throw InvalidGroupError("group size must be >= 2, got " +
                            std::to_string(group_size));
  }
  const double g = group_size;
  if (group_size % 2 == 0) return g / (4.0 * (g - 1.0));
  return (g + 1.0) / (4.0 * g);
}

// Unbiased (divisor G-1) sample variance of the group rewards.
inline double unbiased_group_variance(std::span<const double> rewards) {
  detail::require_group(rewards);
  const auto n = rewards.size();
  const double g = static_cast<double>(n);
  if (is_binary(rewards)) {
    const double k = success_count(rewards);
    return k * (g - k) / (g * (g - 1.0));
  }
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= g;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  return ss / (g - 1.0);
}

inline double normalized_p(std::span<const double> rewards) {
  const double var = unbiased_group_variance(rewards);
  const double p = var / max_group_variance(static_cast<int>(rewards.size()));
  return std::clamp(p, 0.0, 1.0);
}

// |2k/G - 1|, the empirical estimate of |P[r=1] - P[r=0]|.
inline double outcome_gap(std::span<const double> rewards) {
  detail::require_group(rewards);
  if (!is_binary(rewards)) {
    throw UnsupportedRewardError("outcome_gap requires rewards in {0, 1}");
  }
  const double g = static_cast<double>(rewards.size());
  return std::abs(2.0 * success_count(rewards) / g - 1.0);
}

inline GroupDifficulty group_difficulty(std::span<const double> rewards) {
  GroupDifficulty d;
  d.variance = unbiased_group_variance(rewards);
  d.variance_max = max_group_variance(static_cast<int>(rewards.size()));
  d.p = std::clamp(d.variance / d.variance_max, 0.0, 1.0);
  d.binary = is_binary(rewards);
  if (d.binary) {
    d.successes = success_count(rewards);
    d.outcome_gap = outcome_gap(rewards);
  }
  return d;
}

}  // namespace vcrl
