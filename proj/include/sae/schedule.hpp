// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "sae/config.hpp"

namespace sae {

// Step counts and the learning-rate / sparsity annealing curves.
struct TrainSchedule {
  std::int64_t total_steps = 0;
  double base_lr = 8e-4;
  std::int64_t warmup_steps = -1;   // <0: min(10000, 10% of total)
  double decay_fraction = 0.2;      // linear decay to 0 over the final fraction
  double k_anneal_fraction = 0.1;   // active-count anneal window
  std::int64_t batch_size = 1024;

  std::int64_t resolved_warmup() const {
    return warmup_steps >= 0 ? warmup_steps
                             : std::min<std::int64_t>(10000, total_steps / 10);
  }

  void validate() const {
    if (total_steps < 0) throw ContractError("total_steps must be >= 0");
    if (base_lr <= 0) throw ContractError("base_lr must be > 0");
    if (decay_fraction < 0 || decay_fraction > 1)
      throw ContractError("decay_fraction must be in [0,1]");
    if (k_anneal_fraction < 0 || k_anneal_fraction > 1)
      throw ContractError("k_anneal_fraction must be in [0,1]");
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    const double decay_steps = decay_fraction * double(total_steps);
    if (double(resolved_warmup()) + decay_steps > double(total_steps))
      throw ContractError("warmup plus decay window exceeds total_steps");
  }
};

// Piecewise-linear rate: 0 -> base over the warmup, flat plateau, then
// linear decay to exactly 0 at total_steps.
inline double lr_at(std::int64_t step, const TrainSchedule& s) {
  if (step < 0 || step > s.total_steps)
    throw ContractError("lr_at: step out of [0, total_steps]");
  const std::int64_t warmup = s.resolved_warmup();
  if (warmup > 0 && step < warmup)
    return s.base_lr * double(step) / double(warmup);
  const double decay_steps = s.decay_fraction * double(s.total_steps);
  const double decay_start = double(s.total_steps) - decay_steps;
  if (decay_steps > 0 && double(step) > decay_start)
    return s.base_lr * (double(s.total_steps) - double(step)) / decay_steps;
  return s.base_lr;
}

// Active-feature count: log-linear from D down to K over the first
// k_anneal_fraction of training, K afterwards. Log-linear spends
// proportional time at every sparsity scale when D/K spans orders of
// magnitude. Rounded to nearest, clamped to [K, F].
inline int k_at(std::int64_t step, const TrainSchedule& s, const SaeConfig& cfg) {
  if (step < 0) throw ContractError("k_at: negative step");
  const double anneal_steps = s.k_anneal_fraction * double(s.total_steps);
  const int kd = std::clamp(cfg.d_model, cfg.k, cfg.n_features);
  if (anneal_steps <= 0 || double(step) >= anneal_steps) return cfg.k;
  const double t = double(step) / anneal_steps;
  const double logk =
      std::log(double(kd)) * (1.0 - t) + std::log(double(cfg.k)) * t;
  const int k = int(std::lround(std::exp(logk)));
  return std::clamp(k, cfg.k, cfg.n_features);
}

}  // namespace sae
