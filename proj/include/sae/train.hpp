// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "sae/activations.hpp"
#include "sae/adam.hpp"
#include "sae/normalize.hpp"
#include "sae/schedule.hpp"

namespace sae {

struct TrainLogRecord {
  std::int64_t step = 0;
  double lr = 0;
  int effective_k = 0;
  double mse = 0;
  double l0_mean = 0;
  double fraction_never_fired = 0;
};

struct TrainHistory {
  std::vector<TrainLogRecord> records;
};

struct TrainOptions {
  std::int64_t log_every = 50;
  NormFactors norm;                      // applied to every batch
  std::int64_t dead_window_tokens = 1000000;  // never-fired lookback
};

struct TrainResult {
  SaeParams<float> params;  // pre-post-processing
  AdamState<float> adam;
  TrainHistory history;
};

// Full recipe: init, then per step sample / normalize / gradients with the
// annealed k / Adam with the scheduled lr / decoder constraints (Vanilla
// only; the norm-weighted TopK selection makes them unnecessary there).
// Deterministic given (config, schedule, source stream, seed).
TrainResult train(const SaeConfig& config, const TrainSchedule& schedule,
                  ActivationSource& source, std::uint64_t seed,
                  const TrainOptions& options = {});

}  // namespace sae
