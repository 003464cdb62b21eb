#pragma once

// Oracle and invariant suites behind `vcrl verify`. Each suite is a pure
// function of its seed and returns a pass flag with a one-line detail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "vcrl/fixtures.hpp"
#include "vcrl/group_stats.hpp"
#include "vcrl/memory_bank.hpp"
#include "vcrl/metrics.hpp"
#include "vcrl/objectives.hpp"
#include "vcrl/oracles.hpp"
#include "vcrl/rollout_env.hpp"

namespace vcrl::checks {

struct CheckOptions {
  std::uint64_t seed = 20250101;
  // Negative-control hook: multiplies analytic gradients by (1 + x) before
  // comparison so the gradient suite must fail.
  double gradient_perturbation = 0.0;
};

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

// Closed-form binary variance against brute force for G in 2..32, and the
// maximum against both the even/odd formula and the k sweep.
inline SuiteResult variance_suite(const CheckOptions& = {}) {
  SuiteResult r{"variance", true, "", 0.0};
  double worst = 0.0;
  for (int g = 2; g <= 32; ++g) {
    for (int k = 0; k <= g; ++k) {
      const auto rewards = oracle::binary_rewards(g, k);
      const double closed = static_cast<double>(k) * (g - k) / (static_cast<double>(g) * (g - 1));
      worst = std::max({worst, std::abs(closed - oracle::sample_variance(rewards)),
                        std::abs(unbiased_group_variance(rewards) - oracle::sample_variance(rewards))});
    }
    worst = std::max({worst, std::abs(max_group_variance(g) - oracle::max_binary_variance(g))});
  }
  r.passed = worst <= 1e-12;
  r.detail = "max abs error " + fmt(worst);
  return r;
}

// Symmetry, zeros, unit peak, unimodality and the even-G identity of p(k).
inline SuiteResult pcurve_suite(const CheckOptions& = {}) {
  SuiteResult r{"pcurve", true, "", 0.0};
  double worst = 0.0;
  bool shape_ok = true;
  for (int g = 2; g <= 32; ++g) {
    std::vector<double> p(static_cast<std::size_t>(g + 1));
    for (int k = 0; k <= g; ++k) p[static_cast<std::size_t>(k)] = normalized_p(oracle::binary_rewards(g, k));
    for (int k = 0; k <= g; ++k) {
      worst = std::max(worst, std::abs(p[static_cast<std::size_t>(k)] - p[static_cast<std::size_t>(g - k)]));
      if (g % 2 == 0) {
        const double x = 2.0 * k / g - 1.0;
        worst = std::max(worst, std::abs(p[static_cast<std::size_t>(k)] - (1.0 - x * x)));
        const double gap = outcome_gap(oracle::binary_rewards(g, k));
        worst = std::max(worst, std::abs(p[static_cast<std::size_t>(k)] - (1.0 - gap * gap)));
      }
    }
    worst = std::max({worst, std::abs(p.front()), std::abs(p.back()),
                      std::abs(p[static_cast<std::size_t>(g / 2)] - 1.0)});
    for (int k = 1; k <= g; ++k) {
      const double prev = p[static_cast<std::size_t>(k - 1)];
      const double cur = p[static_cast<std::size_t>(k)];
      if (k <= g / 2 && cur < prev - 1e-15) shape_ok = false;
      if (k > g / 2 && cur > prev + 1e-15) shape_ok = false;
    }
  }
  r.passed = worst <= 1e-12 && shape_ok;
  r.detail = "max abs error " + fmt(worst) + (shape_ok ? ", unimodal" : ", NOT unimodal");
  return r;
}

// Analytic gradients of all four objectives against central differences.
inline SuiteResult gradient_suite(const CheckOptions& opts = {}, int trials = 50) {
  SuiteResult r{"gradients", true, "", 0.0};
  auto rng = make_stream({opts.seed, 11});
  fixtures::BatchSpec spec;
  double worst = 0.0;
  double worst_zero = 0.0;
  int evaluated = 0;
  int degenerate = 0;
  const Method methods[] = {Method::grpo, Method::dapo, Method::gspo, Method::vcrl};
  for (Method method : methods) {
    // GSPO's production clip (3e-4) leaves almost no unclipped terms; the
    // check uses 0.2 so both branches are exercised.
    const ClipConfig clip = method == Method::dapo ? ClipConfig::asymmetric(0.2, 0.28)
                                                   : method == Method::gspo
                                                         ? ClipConfig::sequence(0.2)
                                                         : ClipConfig::symmetric(0.2);
    const double kappa = 0.3;
    int done = 0;
    while (done < trials) {
      const auto old_params = fixtures::random_params(rng, spec.clusters, spec.shape);
      const auto batch = fixtures::random_batch(rng, old_params, spec);
      const auto new_params = fixtures::perturbed(old_params, rng, 0.15);
      if (fixtures::clip_margin(batch, new_params, clip.low, clip.high,
                                method == Method::gspo) < 1e-4) {
        continue;
      }
      auto value = [&](const PolicyParams& p) {
        return evaluate_objective(method, batch, p, clip, kappa).value;
      };
      auto analytic = evaluate_objective(method, batch, new_params, clip, kappa).gradient;
      for (double& g : analytic.values()) g *= 1.0 + opts.gradient_perturbation;
      const auto numeric = oracle::finite_difference(value, new_params, 1e-5);
      double scale = 0.0;
      for (double g : analytic.values()) scale = std::max(scale, std::abs(g));
      if (scale < 1e-9) {
        // Every term on a binding clip branch: relative error is undefined,
        // so compare absolutely and draw another batch.
        worst_zero = std::max(worst_zero, oracle::relative_error(numeric, analytic.values(), 1.0));
        ++degenerate;
        continue;
      }
      const double err = oracle::relative_error(numeric, analytic.values(), 1e-8);
      worst = std::max(worst, err);
      ++done;
      ++evaluated;
    }
  }
  r.passed = worst <= 1e-6 && worst_zero <= 1e-9;
  r.detail = std::to_string(evaluated) + " batches, worst relative error " + fmt(worst);
  if (degenerate > 0) {
    r.detail += "; " + std::to_string(degenerate) + " all-clipped batches, max abs error " +
                fmt(worst_zero);
  }
  return r;
}

// ||m grad log pi|| <= ||grad log pi|| for every token term.
inline SuiteResult mask_norm_suite(const CheckOptions& opts = {}, int trials = 100) {
  SuiteResult r{"mask-norm", true, "", 0.0};
  auto rng = make_stream({opts.seed, 12});
  fixtures::BatchSpec spec;
  spec.group_size = 16;
  spec.max_groups = 6;
  int failures = 0;
  for (double kappa : {0.0, 0.3, 0.8}) {
    for (int t = 0; t < trials; ++t) {
      const auto old_params = fixtures::random_params(rng, spec.clusters, spec.shape);
      const auto batch = fixtures::random_batch(rng, old_params, spec);
      const auto new_params = fixtures::perturbed(old_params, rng, 0.1);
      if (!per_term_gradnorm_check(batch, new_params, kappa)) ++failures;
    }
  }
  r.passed = failures == 0;
  r.detail = std::to_string(3 * trials) + " batches, " + std::to_string(failures) + " failures";
  return r;
}

// Momentum recurrence, pop order with FIFO ties, replay cap.
inline SuiteResult bank_suite(const CheckOptions& opts = {}) {
  SuiteResult r{"bank", true, "", 0.0};
  auto rng = make_stream({opts.seed, 13});
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double p0 = uniform01(rng);
    const double alpha = 0.99 * uniform01(rng);
    MemoryBank bank(BankConfig{alpha, 2, {}});
    bank.push(QueryId{1}, p0);
    for (int n = 1; n <= 40; ++n) {
      bank.tick();
      worst = std::max(worst, std::abs(bank.snapshot().front().priority -
                                       oracle::priority_after(p0, alpha, n)));
    }
  }

  bool order_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    MemoryBank bank;
    const int n = 2 + static_cast<int>(rng() % 10);
    struct Item { QueryId id; double p; int seq; };
    std::vector<Item> items;
    for (int i = 0; i < n; ++i) {
      // coarse priorities so ties are common
      const double p = static_cast<double>(rng() % 4) / 4.0;
      items.push_back({QueryId{static_cast<std::uint32_t>(i)}, p, i});
      bank.push(items.back().id, p);
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
      return a.p != b.p ? a.p > b.p : a.seq < b.seq;
    });
    std::size_t pos = 0;
    while (!bank.empty()) {
      const std::size_t m = 1 + rng() % 3;
      for (QueryId id : bank.pop_batch(m)) {
        if (pos >= items.size() || items[pos++].id != id) order_ok = false;
      }
    }
  }

  bool cap_ok = true;
  MemoryBank bank;
  for (int step = 0; step < 500; ++step) {
    for (int j = 0; j < 3; ++j) bank.push(QueryId{static_cast<std::uint32_t>(rng() % 20)}, uniform01(rng));
    bank.pop_batch(rng() % 4);
    bank.tick();
    if (bank.max_replay_count() > bank.config().max_replays) cap_ok = false;
  }

  r.passed = worst <= 1e-12 && order_ok && cap_ok;
  r.detail = "recurrence error " + fmt(worst) + (order_ok ? ", order ok" : ", ORDER MISMATCH") +
             (cap_ok ? ", cap ok" : ", CAP EXCEEDED");
  return r;
}

// kappa -> 0+ mask equals DAPO's 0 < k < G set; kappa = 0 VCRL equals GRPO.
inline SuiteResult filters_suite(const CheckOptions& opts = {}) {
  SuiteResult r{"filters", true, "", 0.0};
  auto rng = make_stream({opts.seed, 14});
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const int g = 2 + static_cast<int>(rng() % 31);
    const int k = static_cast<int>(rng() % static_cast<std::uint64_t>(g + 1));
    const auto rewards = oracle::binary_rewards(g, k);
    const bool vcrl_keep = normalized_p(rewards) >= 1e-9;
    const bool dapo_keep = 0 < k && k < g;
    if (vcrl_keep != dapo_keep) ++mismatches;
  }

  double worst = 0.0;
  fixtures::BatchSpec spec;
  spec.random_rewards = true;
  for (int i = 0; i < 100; ++i) {
    const auto old_params = fixtures::random_params(rng, spec.clusters, spec.shape);
    const auto batch = fixtures::random_batch(rng, old_params, spec);
    const auto new_params = fixtures::perturbed(old_params, rng, 0.1);
    const auto clip = ClipConfig::symmetric(0.2);
    const auto a = grpo_objective(batch, new_params, clip);
    const auto b = vcrl_objective(batch, new_params, clip, 0.0);
    worst = std::max(worst, std::abs(a.value - b.value));
    worst = std::max(worst, oracle::relative_error(a.gradient.values(), b.gradient.values(), 1.0));
  }
  r.passed = mismatches == 0 && worst <= 1e-12;
  r.detail = std::to_string(mismatches) + " mask mismatches, kappa=0 vs GRPO diff " + fmt(worst);
  return r;
}

// Library smoothing against window-by-window recomputation.
inline SuiteResult smoothing_suite(const CheckOptions& opts = {}) {
  SuiteResult r{"smoothing", true, "", 0.0};
  auto rng = make_stream({opts.seed, 15});
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs(1 + rng() % 300);
    for (double& x : xs) x = uniform01(rng);
    for (std::size_t w : {std::size_t{1}, std::size_t{5}, std::size_t{20}}) {
      const auto ma = moving_average(xs, w);
      const auto sd = rolling_std(xs, w);
      const auto ma_ref = oracle::moving_average(xs, w);
      const auto sd_ref = oracle::rolling_std(xs, w);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        worst = std::max({worst, std::abs(ma[i] - ma_ref[i]), std::abs(sd[i] - sd_ref[i])});
      }
      if (w == 1) {
        for (std::size_t i = 0; i < xs.size(); ++i) worst = std::max(worst, std::abs(ma[i] - xs[i]));
      }
    }
  }
  r.passed = worst <= 1e-12;
  r.detail = "max abs error " + fmt(worst);
  return r;
}

// Group rewards are Binomial(G, success_probability) and recorded
// log-probabilities match recomputation.
inline SuiteResult sampling_suite(const CheckOptions& opts = {}, int groups = 10000) {
  SuiteResult r{"sampling", true, "", 0.0};
  const WorldShape shape{4, 3};
  SyntheticTask task{QueryId{0}, 0, {1, 2}};
  // Bias the target path so the success probability is exactly 1/2.
  PolicyParams params(1, shape);
  double lo = -20.0, hi = 20.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    PolicyParams p(1, shape);
    p.at(0, 0, 1) = p.at(0, 1, 2) = p.at(0, 2, shape.eos()) = mid;
    if (success_probability(p, task) < 0.5) lo = mid; else hi = mid;
  }
  params.at(0, 0, 1) = params.at(0, 1, 2) = params.at(0, 2, shape.eos()) = 0.5 * (lo + hi);
  const double ps = success_probability(params, task);

  const int g = 16;
  std::vector<int> counts(g + 1, 0);
  double mean_k = 0.0;
  double mean_p = 0.0;
  double logprob_err = 0.0;
  for (int i = 0; i < groups; ++i) {
    const auto rollouts = sample_group(params, task, g, splitmix64(opts.seed + static_cast<std::uint64_t>(i)));
    const auto grp = make_group(task, rollouts);
    counts[static_cast<std::size_t>(grp.successes)]++;
    mean_k += grp.successes;
    mean_p += grp.p;
    if (i < 200) {
      for (const auto& roll : rollouts) {
        const auto lp = token_logprobs(params, task, roll.tokens);
        for (std::size_t t = 0; t < lp.size(); ++t) {
          logprob_err = std::max(logprob_err, std::abs(lp[t] - roll.logprobs_old[t]));
        }
      }
    }
  }
  mean_k /= groups;
  mean_p /= groups;

  int bad_bins = 0;
  double expected_p = 0.0;
  for (int k = 0; k <= g; ++k) {
    const double pk = oracle::binomial_pmf(g, ps, k);
    expected_p += pk * normalized_p(oracle::binary_rewards(g, k));
    const double se = std::sqrt(pk * (1.0 - pk) / groups);
    const double emp = static_cast<double>(counts[static_cast<std::size_t>(k)]) / groups;
    if (std::abs(emp - pk) > 3.0 * se + 1e-12) ++bad_bins;
  }
  const double mean_frac = mean_k / g;
  // 3-SE bins at 17 bins occasionally miss one by chance; allow one.
  r.passed = std::abs(mean_frac - ps) <= 0.02 && bad_bins <= 1 &&
             std::abs(mean_p - expected_p) <= 0.01 && logprob_err <= 1e-12;
  r.detail = "mean k/G " + fmt(mean_frac) + " vs " + fmt(ps) + ", " + std::to_string(bad_bins) +
             " bins outside 3 SE, E[p] " + fmt(mean_p) + " vs " + fmt(expected_p);
  return r;
}

struct Suite {
  std::string name;
  std::function<SuiteResult(const CheckOptions&)> run;
};

inline std::vector<Suite> all_suites() {
  return {
      {"variance", [](const CheckOptions& o) { return variance_suite(o); }},
      {"pcurve", [](const CheckOptions& o) { return pcurve_suite(o); }},
      {"gradients", [](const CheckOptions& o) { return gradient_suite(o); }},
      {"mask-norm", [](const CheckOptions& o) { return mask_norm_suite(o); }},
      {"bank", [](const CheckOptions& o) { return bank_suite(o); }},
      {"filters", [](const CheckOptions& o) { return filters_suite(o); }},
      {"smoothing", [](const CheckOptions& o) { return smoothing_suite(o); }},
      {"sampling", [](const CheckOptions& o) { return sampling_suite(o); }},
  };
}

inline SuiteResult run_timed(const Suite& suite, const CheckOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  auto res = suite.run(opts);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace vcrl::checks
