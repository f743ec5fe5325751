// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sae/adam.hpp"
#include "sae/normalize.hpp"
#include "sae/schedule.hpp"
#include "sae/train.hpp"

namespace sae {

// Self-describing checkpoint container, magic "SAEF", little-endian,
// 32-bit float tensors serialized in their logical row-major layouts.
// Byte layout in docs/formats.md.
struct Checkpoint {
  SaeConfig config;
  TrainSchedule schedule;
  SaeParams<float> params;
  std::optional<AdamState<float>> adam;
  std::int64_t step_count = 0;
  NormFactors norm;
  bool norm_folded = false;  // fold_norm_into_params already applied
  std::string label;         // e.g. "L15R-8x-TopK"
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Naming convention used for checkpoint labels and default file stems,
// e.g. "L15R-8x-TopK": position label, expansion factor, variant.
std::string sae_name(const std::string& position_label, const SaeConfig& cfg);

}  // namespace sae
