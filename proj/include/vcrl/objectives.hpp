#pragma once

// Clipped surrogate objectives over a batch of rollout groups.
//
// All objectives are maximization targets. Gradients are exact with respect
// to the policy logits, treating min(r*A, clip(r)*A) piecewise: a term whose
// clipped branch is strictly smaller contributes zero gradient.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vcrl/errors.hpp"
#include "vcrl/group_stats.hpp"
#include "vcrl/rollout_env.hpp"

namespace vcrl {

enum class Method { grpo, dapo, gspo, vcrl };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::grpo: return "grpo";
    case Method::dapo: return "dapo";
    case Method::gspo: return "gspo";
    case Method::vcrl: return "vcrl";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "grpo") return Method::grpo;
  if (s == "dapo") return Method::dapo;
  if (s == "gspo") return Method::gspo;
  if (s == "vcrl") return Method::vcrl;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

// Advantage standard deviations below this are treated as this.
inline constexpr double kAdvantageStdFloor = 1e-6;

// (r - mean) / max(std, 1e-6), std with divisor G-1. Constant rewards give
// exactly zero advantages.
inline std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw InvalidGroupError("advantages need at least 2 rewards");
  }
  const double g = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= g;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::max(std::sqrt(ss / (g - 1.0)), kAdvantageStdFloor);
  std::vector<double> adv(rewards.size());
  const bool constant = std::all_of(rewards.begin(), rewards.end(),
                                    [&](double r) { return r == rewards[0]; });
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = constant ? 0.0 : (rewards[i] - mean) / sd;
  }
  return adv;
}

struct RolloutGroup {
  SyntheticTask task;
  std::vector<Rollout> rollouts;
  std::vector<double> rewards;
  std::vector<double> advantages;
  double p = 0.0;
  int successes = 0;

  int size() const noexcept { return static_cast<int>(rollouts.size()); }
  bool mixed() const noexcept { return successes > 0 && successes < size(); }
};

// Derives rewards, advantages and p from the rollouts' recorded rewards.
inline RolloutGroup make_group(SyntheticTask task, std::vector<Rollout> rollouts) {
  RolloutGroup g;
  g.task = std::move(task);
  g.rollouts = std::move(rollouts);
  g.rewards.reserve(g.rollouts.size());
  for (const auto& r : g.rollouts) g.rewards.push_back(r.reward);
  g.advantages = group_advantages(g.rewards);
  g.p = normalized_p(g.rewards);
  g.successes = success_count(g.rewards);
  return g;
}

struct RolloutBatch {
  std::vector<RolloutGroup> groups;
  double kappa = 0.0;

  bool empty() const noexcept { return groups.empty(); }

  int group_size() const {
    if (groups.empty()) throw EmptyBatchError("batch has no groups");
    const int g = groups.front().size();
    for (const auto& grp : groups) {
      if (grp.size() != g) {
        throw InvalidGroupError("groups in one batch must share G");
      }
    }
    return g;
  }
};

struct ClipConfig {
  enum class Mode { symmetric, asymmetric, sequence };

  Mode mode = Mode::symmetric;
  double low = 0.2;
  double high = 0.2;

  static ClipConfig symmetric(double eps) { return {Mode::symmetric, eps, eps}; }
  static ClipConfig asymmetric(double eps_low, double eps_high) {
    return {Mode::asymmetric, eps_low, eps_high};
  }
  static ClipConfig sequence(double eps) { return {Mode::sequence, eps, eps}; }

  void validate() const {
    if (!(low > 0.0) || !(high > 0.0)) {
      throw ConfigError("clip ranges must be positive");
    }
    if (mode != Mode::asymmetric && low != high) {
      throw ConfigError("symmetric clip needs equal ranges");
    }
    if (mode == Mode::asymmetric && high < low) {
      throw ConfigError("asymmetric clip needs eps_high >= eps_low");
    }
  }

  friend bool operator==(const ClipConfig&, const ClipConfig&) = default;
};

inline ClipConfig default_clip(Method m) {
  switch (m) {
    case Method::dapo: return ClipConfig::asymmetric(0.2, 0.28);
    case Method::gspo: return ClipConfig::sequence(0.0003);
    default: return ClipConfig::symmetric(0.2);
  }
}

struct ObjectiveResult {
  double value = 0.0;
  PolicyParams gradient;
  std::vector<bool> mask;  // per group: contributed to the objective
  int retained = 0;
};

inline double token_ratio(const PolicyParams& params_new, double logprob_old,
                          const SyntheticTask& task, int token, int position) {
  return std::exp(log_softmax_at(params_new.row(task.cluster, position), token) -
                  logprob_old);
}

// Length-normalized sequence ratio, exp(mean_t(log pi_new - log pi_old)).
inline double sequence_ratio(const PolicyParams& params_new, const SyntheticTask& task,
                             const Rollout& rollout) {
  if (rollout.tokens.empty()) {
    throw InvalidRolloutError("sequence ratio of an empty rollout");
  }
  double diff = 0.0;
  for (std::size_t t = 0; t < rollout.tokens.size(); ++t) {
    diff += log_softmax_at(params_new.row(task.cluster, static_cast<int>(t)),
                           rollout.tokens[t]) -
            rollout.logprobs_old[t];
  }
  return std::exp(diff / static_cast<double>(rollout.tokens.size()));
}

namespace detail {

struct ClipTerm {
  double value;
  bool unclipped;  // gradient flows through ratio * advantage
};

inline ClipTerm clipped_term(double ratio, double adv, double low, double high) {
  const double plain = ratio * adv;
  const double clipped = std::clamp(ratio, 1.0 - low, 1.0 + high) * adv;
  if (plain <= clipped) return {plain, true};
  return {clipped, false};
}

// Lazily built per-cluster softmax tables for one parameter snapshot.
class TableCache {
 public:
  explicit TableCache(const PolicyParams& params)
      : params_(params), tables_(static_cast<std::size_t>(params.clusters())) {}

  const ClusterTable& get(int cluster) {
    auto& slot = tables_[static_cast<std::size_t>(cluster)];
    if (!slot) slot.emplace(params_, cluster);
    return *slot;
  }

 private:
  const PolicyParams& params_;
  std::vector<std::optional<ClusterTable>> tables_;
};

// grad[row] += weight * (onehot(token) - softmax(row))
inline void add_score(PolicyParams& grad, const ClusterTable& table, int cluster,
                      int position, int token, double weight) {
  if (weight == 0.0) return;
  const auto probs = table.probs(position);
  auto g = grad.row(cluster, position);
  for (std::size_t v = 0; v < probs.size(); ++v) g[v] -= weight * probs[v];
  g[static_cast<std::size_t>(token)] += weight;
}

enum class TokenNorm { per_sequence, per_group_tokens };

// Token-level clipped surrogate. `group_weight[g]` multiplies group g's
// contribution (0 masks it out).
inline void token_surrogate(const RolloutBatch& batch, const PolicyParams& params,
                            double low, double high, TokenNorm norm,
                            std::span<const double> group_weight,
                            ObjectiveResult& out) {
  TableCache cache(params);
  for (std::size_t gi = 0; gi < batch.groups.size(); ++gi) {
    const double w = group_weight[gi];
    if (w == 0.0) continue;
    const auto& grp = batch.groups[gi];
    const int cluster = grp.task.cluster;
    const ClusterTable& table = cache.get(cluster);
    std::size_t total_tokens = 0;
    for (const auto& r : grp.rollouts) total_tokens += r.tokens.size();
    for (std::size_t i = 0; i < grp.rollouts.size(); ++i) {
      const auto& roll = grp.rollouts[i];
      const double adv = grp.advantages[i];
      const double coeff =
          norm == TokenNorm::per_sequence
              ? w / (static_cast<double>(grp.rollouts.size()) *
                     static_cast<double>(roll.tokens.size()))
              : w / static_cast<double>(total_tokens);
      for (std::size_t t = 0; t < roll.tokens.size(); ++t) {
        const int pos = static_cast<int>(t);
        const int tok = roll.tokens[t];
        const double ratio = std::exp(table.logprob(pos, tok) - roll.logprobs_old[t]);
        const auto term = clipped_term(ratio, adv, low, high);
        out.value += coeff * term.value;
        if (term.unclipped) add_score(out.gradient, table, cluster, pos, tok, coeff * adv * ratio);
      }
    }
  }
}

inline ObjectiveResult start_result(const RolloutBatch& batch, const PolicyParams& params) {
  if (batch.empty()) throw EmptyBatchError("objective over an empty batch");
  batch.group_size();
  for (const auto& g : batch.groups) {
    require_task(params, g.task);
    for (const auto& r : g.rollouts) {
      require_emission(params, g.task, r.tokens);
      if (r.logprobs_old.size() != r.tokens.size()) {
        throw InvalidRolloutError("rollout is missing old log-probabilities");
      }
    }
  }
  ObjectiveResult out;
  out.gradient = PolicyParams(params.clusters(), params.shape());
  out.mask.assign(batch.groups.size(), false);
  return out;
}

inline ObjectiveResult masked_grpo(const RolloutBatch& batch, const PolicyParams& params,
                                   const ClipConfig& clip,
                                   std::optional<double> kappa) {
  clip.validate();
  auto out = start_result(batch, params);
  const double n = static_cast<double>(batch.groups.size());
  std::vector<double> weight(batch.groups.size());
  for (std::size_t g = 0; g < batch.groups.size(); ++g) {
    const bool keep = !kappa || batch.groups[g].p >= *kappa;
    out.mask[g] = keep;
    out.retained += keep ? 1 : 0;
    weight[g] = keep ? 1.0 / n : 0.0;
  }
  token_surrogate(batch, params, clip.low, clip.high, TokenNorm::per_sequence, weight,
                  out);
  return out;
}

}  // namespace detail

// Mean over groups of (1/G) sum_i (1/|y_i|) sum_t min(r A, clip(r) A).
inline ObjectiveResult grpo_objective(const RolloutBatch& batch,
                                      const PolicyParams& params_new,
                                      const ClipConfig& clip) {
  return detail::masked_grpo(batch, params_new, clip, std::nullopt);
}

// GRPO with each group gated by 1{p >= kappa}. Masked groups still count
// in the 1/N group average.
inline ObjectiveResult vcrl_objective(const RolloutBatch& batch,
                                      const PolicyParams& params_new,
                                      const ClipConfig& clip, double kappa) {
  return detail::masked_grpo(batch, params_new, clip, kappa);
}

// Token-level aggregation with per-group denominator sum_i |y_i|, asymmetric
// clip, over groups with 0 < k < G only.
inline ObjectiveResult dapo_objective(const RolloutBatch& batch,
                                      const PolicyParams& params_new,
                                      const ClipConfig& clip) {
  clip.validate();
  auto out = detail::start_result(batch, params_new);
  for (std::size_t g = 0; g < batch.groups.size(); ++g) {
    out.mask[g] = batch.groups[g].mixed();
    out.retained += out.mask[g] ? 1 : 0;
  }
  if (out.retained == 0) {
    throw EmptyAfterFilterError("every group has k = 0 or k = G");
  }
  std::vector<double> weight(batch.groups.size());
  for (std::size_t g = 0; g < batch.groups.size(); ++g) {
    weight[g] = out.mask[g] ? 1.0 / out.retained : 0.0;
  }
  detail::token_surrogate(batch, params_new, clip.low, clip.high,
                          detail::TokenNorm::per_group_tokens, weight, out);
  return out;
}

// Sequence-ratio surrogate: mean over groups of (1/G) sum_i min(s A, clip(s) A).
inline ObjectiveResult gspo_objective(const RolloutBatch& batch,
                                      const PolicyParams& params_new,
                                      const ClipConfig& clip) {
  clip.validate();
  auto out = detail::start_result(batch, params_new);
  const double n = static_cast<double>(batch.groups.size());
  detail::TableCache cache(params_new);
  for (std::size_t gi = 0; gi < batch.groups.size(); ++gi) {
    const auto& grp = batch.groups[gi];
    const ClusterTable& table = cache.get(grp.task.cluster);
    out.mask[gi] = true;
    ++out.retained;
    const double coeff = 1.0 / (n * static_cast<double>(grp.rollouts.size()));
    for (std::size_t i = 0; i < grp.rollouts.size(); ++i) {
      const auto& roll = grp.rollouts[i];
      const double adv = grp.advantages[i];
      double diff = 0.0;
      for (std::size_t t = 0; t < roll.tokens.size(); ++t) {
        diff += table.logprob(static_cast<int>(t), roll.tokens[t]) - roll.logprobs_old[t];
      }
      const double s = std::exp(diff / static_cast<double>(roll.tokens.size()));
      const auto term = detail::clipped_term(s, adv, clip.low, clip.high);
      out.value += coeff * term.value;
      if (!term.unclipped) continue;
      const double w = coeff * adv * s / static_cast<double>(roll.tokens.size());
      for (std::size_t t = 0; t < roll.tokens.size(); ++t) {
        detail::add_score(out.gradient, table, grp.task.cluster,
                          static_cast<int>(t), roll.tokens[t], w);
      }
    }
  }
  return out;
}

inline ObjectiveResult evaluate_objective(Method method, const RolloutBatch& batch,
                                          const PolicyParams& params_new,
                                          const ClipConfig& clip, double kappa) {
  switch (method) {
    case Method::grpo: return grpo_objective(batch, params_new, clip);
    case Method::dapo: return dapo_objective(batch, params_new, clip);
    case Method::gspo: return gspo_objective(batch, params_new, clip);
    case Method::vcrl: return vcrl_objective(batch, params_new, clip, kappa);
  }
  throw ConfigError("unknown method");
}

// Checks ||m * grad log pi|| <= ||grad log pi|| for every token term, with m
// the VCRL group mask at threshold kappa.
inline bool per_term_gradnorm_check(const RolloutBatch& batch,
                                    const PolicyParams& params_new, double kappa) {
  for (const auto& grp : batch.groups) {
    const double m = grp.p >= kappa ? 1.0 : 0.0;
    for (const auto& roll : grp.rollouts) {
      for (std::size_t t = 0; t < roll.tokens.size(); ++t) {
        const auto probs = softmax(params_new.row(grp.task.cluster, static_cast<int>(t)));
        double sq = 0.0;
        for (std::size_t v = 0; v < probs.size(); ++v) {
          const double g = (static_cast<int>(v) == roll.tokens[t] ? 1.0 : 0.0) - probs[v];
          sq += g * g;
        }
        const double plain = std::sqrt(sq);
        if (!(std::abs(m) * plain <= plain)) return false;
      }
    }
  }
  return true;
}

}  // namespace vcrl
