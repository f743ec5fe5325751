// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "sae/activations.hpp"
#include "sae/params.hpp"

namespace sae {

// Scalar normalization factors; s_in == s_out for autoencoders.
struct NormFactors {
  float s_in = 1.0f;
  float s_out = 1.0f;
};

// s = sqrt(D) / mean(||x||_2) over n_samples vectors, separately for
// inputs and targets when the source carries targets. Mean of norms, not
// root-mean-square. Errors on an all-zero stream.
NormFactors estimate_norm_factors(ActivationSource& source, std::int64_t n_samples);

// Elementwise scale: inputs by s_in, targets by s_out. Exact.
void apply_norm(ActivationBatch& batch, const NormFactors& factors);

// Rescale trained weights so the SAE operates on raw inputs and produces
// raw outputs: decoder columns pick up s_in/s_out, the decoder bias drops
// s_out, the encoder bias drops s_in, and the encoder weights stay put.
SaeParams<float> fold_norm_into_params(const SaeParams<float>& params,
                                       const NormFactors& factors);

// Unit-norm decoder columns with the compensating encoder rescale; the
// composite reconstruction map is pointwise unchanged and so is the
// norm-weighted TopK mask. Dead (zero-norm) columns are an error carrying
// the feature indices: silently clamping them would hide exactly the
// training failures the firing diagnostics exist to catch.
SaeParams<float> unitize_decoder(const SaeParams<float>& params);

// Pools every strictly positive norm-weighted preactivation over n_tokens
// held-out tokens and places the threshold in the gap below the
// (K * n_tokens)-th largest pooled value, so K features per token clear
// the strict comparison in expectation. Requires post-unitized params
// (weighted scale == preactivation scale). Mutates params/config: stores
// theta and switches the variant to JumpReLU.
float calibrate_jumprelu(SaeConfig& config, SaeParams<float>& params,
                         ActivationSource& source, int k, std::int64_t n_tokens);

}  // namespace sae
