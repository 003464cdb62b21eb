#pragma once

// Gradient-ascent optimizers over the policy table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vcrl/config.hpp"
#include "vcrl/rollout_env.hpp"

namespace vcrl {

struct OptimizerState {
  std::int64_t t = 0;
  std::vector<double> m;
  std::vector<double> v;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  const OptimizerConfig& config() const noexcept { return config_; }
  const OptimizerState& state() const noexcept { return state_; }
  void set_state(OptimizerState s) { state_ = std::move(s); }

  // theta <- theta + step(grad). An exactly-zero gradient never moves the
  // parameters; the adaptive moments still decay and t still advances.
  void ascend(PolicyParams& params, const PolicyParams& grad) {
    auto theta = params.values();
    const auto g = grad.values();
    const bool zero = std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; });

    if (config_.kind == OptimizerKind::sgd) {
      if (zero) return;
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += config_.lr * g[i];
      return;
    }

    if (state_.m.size() != theta.size()) {
      state_.m.assign(theta.size(), 0.0);
      state_.v.assign(theta.size(), 0.0);
    }
    ++state_.t;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      state_.m[i] = b1 * state_.m[i] + (1.0 - b1) * g[i];
      state_.v[i] = b2 * state_.v[i] + (1.0 - b2) * g[i] * g[i];
    }
    if (zero) return;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double mhat = state_.m[i] / c1;
      const double vhat = state_.v[i] / c2;
      theta[i] += config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) -
                                config_.weight_decay * theta[i]);
    }
  }

 private:
  OptimizerConfig config_;
  OptimizerState state_;
};

}  // namespace vcrl
