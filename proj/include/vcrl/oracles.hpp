#pragma once

// Independent reference computations used by the verification suites and the
// tests. Nothing here calls into the code paths it is used to check: the
// variance oracle works on explicit reward vectors in long double, the
// gradient oracle is central finite differences of the objective value, and
// the smoothing oracle recomputes every window from a copied slice.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "vcrl/rollout_env.hpp"

namespace vcrl::oracle {

// Explicit vector with k ones followed by G - k zeros.
inline std::vector<double> binary_rewards(int group_size, int successes) {
  std::vector<double> r(static_cast<std::size_t>(group_size), 0.0);
  std::fill(r.begin(), r.begin() + successes, 1.0);
  return r;
}

// Two-pass sample variance in long double.
inline double sample_variance(std::span<const double> xs) {
  long double mean = 0.0L;
  for (double x : xs) mean += x;
  mean /= static_cast<long double>(xs.size());
  long double ss = 0.0L;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return static_cast<double>(ss / static_cast<long double>(xs.size() - 1));
}

// max over k of the brute-force variance of the explicit binary vector.
inline double max_binary_variance(int group_size) {
  double best = 0.0;
  for (int k = 0; k <= group_size; ++k) {
    best = std::max(best, sample_variance(binary_rewards(group_size, k)));
  }
  return best;
}

inline double binomial_pmf(int n, double p, int k) {
  // log C(n, k) by explicit summation
  long double log_c = 0.0L;
  for (int i = 1; i <= k; ++i) {
    log_c += std::log(static_cast<long double>(n - k + i)) - std::log(static_cast<long double>(i));
  }
  long double lp = log_c;
  if (k > 0) lp += k * std::log(static_cast<long double>(p));
  if (n - k > 0) lp += (n - k) * std::log1p(-static_cast<long double>(p));
  return static_cast<double>(std::exp(lp));
}

// alpha^n p0 + (1 - alpha) sum_{j=1..n} alpha^(n-j) j
inline double priority_after(double p0, double alpha, int n) {
  long double acc = std::pow(static_cast<long double>(alpha), n) * p0;
  for (int j = 1; j <= n; ++j) {
    acc += (1.0L - alpha) * std::pow(static_cast<long double>(alpha), n - j) * j;
  }
  return static_cast<double>(acc);
}

inline std::vector<double> window_slice(std::span<const double> xs, std::size_t i,
                                        std::size_t window) {
  const std::size_t begin = i + 1 >= window ? i + 1 - window : 0;
  return {xs.begin() + static_cast<std::ptrdiff_t>(begin),
          xs.begin() + static_cast<std::ptrdiff_t>(i + 1)};
}

inline std::vector<double> moving_average(std::span<const double> xs, std::size_t window) {
  std::vector<double> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto w = window_slice(xs, i, window);
    const long double sum = std::accumulate(w.begin(), w.end(), 0.0L);
    out.push_back(static_cast<double>(sum / static_cast<long double>(w.size())));
  }
  return out;
}

inline std::vector<double> rolling_std(std::span<const double> xs, std::size_t window) {
  std::vector<double> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto w = window_slice(xs, i, window);
    out.push_back(w.size() < 2 ? 0.0 : std::sqrt(sample_variance(w)));
  }
  return out;
}

// Central differences of f with respect to every parameter entry.
inline std::vector<double> finite_difference(const std::function<double(const PolicyParams&)>& f,
                                             const PolicyParams& at, double h = 1e-5) {
  std::vector<double> out(at.size());
  PolicyParams probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double x = at.values()[i];
    probe.values()[i] = x + h;
    const double up = f(probe);
    probe.values()[i] = x - h;
    const double down = f(probe);
    probe.values()[i] = x;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

// max |a - b| / max(max |b|, floor)
inline double relative_error(std::span<const double> a, std::span<const double> b,
                             double floor = 1e-12) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / std::max(scale, floor);
}

}  // namespace vcrl::oracle
