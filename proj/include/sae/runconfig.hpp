// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "sae/activations.hpp"
#include "sae/config.hpp"
#include "sae/schedule.hpp"

namespace sae {

// Flat key=value run description mirroring SaeConfig + TrainSchedule plus
// the data source. Unknown keys are rejected, all of them reported at
// once. Keys are documented in docs/formats.md.
struct RunConfig {
  // model
  int d_model = 64;
  std::optional<int> n_features;  // or derived from expansion
  double expansion = 8.0;
  int k = 5;
  Variant variant = Variant::TopK;
  PositionKind position_kind = PositionKind::Autoencoder;
  float l1_coeff = 0.0f;

  // schedule
  std::int64_t total_steps = 1000;
  std::int64_t batch_size = 1024;
  double base_lr = 8e-4;
  std::int64_t warmup_steps = -1;
  double decay_fraction = 0.2;
  double k_anneal_fraction = 0.1;
  std::int64_t log_every = 50;

  // data
  std::string source = "synthetic";  // "synthetic" or an .actv path
  std::string target_source;         // transcoder target .actv path
  std::int64_t buffer_capacity = 500000;
  std::int64_t norm_samples = 100000;
  std::optional<std::int64_t> tokens;  // train: total tokens; eval: token count

  // synthetic generator
  int synth_g = 256;
  float synth_fire_prob = 5.0f / 256.0f;
  float synth_noise_sigma = 0.01f;
  std::string synth_mag = "uniform:0.5:2";

  // run
  std::uint64_t seed = 42;
  std::string out = ".";
  std::string label = "L0R";

  int resolved_n_features() const {
    return n_features ? *n_features : int(expansion * d_model + 0.5);
  }
  SaeConfig sae_config() const;
  TrainSchedule train_schedule() const;
  MagnitudeDist magnitude() const;
};

// Parses a key=value document ('#' comments and blank lines allowed).
RunConfig parse_run_config(const std::string& path);
RunConfig run_config_from_map(const std::map<std::string, std::string>& kv);

}  // namespace sae
