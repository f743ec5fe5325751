// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "sae/errors.hpp"

namespace sae {

enum class Variant { Vanilla, TopK, JumpRelu };
enum class PositionKind { Autoencoder, Transcoder };

std::string to_string(Variant v);
std::string to_string(PositionKind p);
Variant variant_from_string(const std::string& s);
PositionKind position_kind_from_string(const std::string& s);

// Model shape and sparsity target; immutable per run.
struct SaeConfig {
  int d_model = 0;      // input dimension D
  int n_features = 0;   // latent width F
  int k = 0;            // target active count
  Variant variant = Variant::TopK;
  PositionKind position_kind = PositionKind::Autoencoder;
  float l1_coeff = 0.0f;  // Vanilla only

  double expansion() const { return double(n_features) / double(d_model); }

  void validate() const {
    if (d_model < 1) throw ContractError("d_model must be >= 1");
    if (n_features < 1) throw ContractError("n_features must be >= 1");
    if (k < 1 || k > n_features)
      throw ContractError("k must satisfy 1 <= k <= n_features (k=" +
                          std::to_string(k) + ", F=" + std::to_string(n_features) + ")");
    if (l1_coeff < 0.0f) throw ContractError("l1_coeff must be >= 0");
  }
};

}  // namespace sae
