// SPDX-License-Identifier: Apache-2.0
#include "sae/normalize.hpp"

#include <algorithm>
#include <cmath>

#include "sae/sae_core.hpp"

namespace sae {

NormFactors estimate_norm_factors(ActivationSource& source, std::int64_t n_samples) {
  if (n_samples < 1) throw ContractError("estimate_norm_factors: n_samples >= 1");
  const double sqrt_d = std::sqrt(double(source.d_model()));
  double sum_in = 0, sum_out = 0;
  std::int64_t seen = 0;
  ActivationBatch batch;
  while (seen < n_samples) {
    const std::size_t got =
        source.next(std::size_t(std::min<std::int64_t>(n_samples - seen, 8192)), batch);
    if (got == 0) break;
    for (std::size_t r = 0; r < got; ++r) {
      if (!batch.valid[r]) continue;
      sum_in += nrm2(batch.x_in.row(r), batch.x_in.cols);
      if (batch.x_out) sum_out += nrm2(batch.x_out->row(r), batch.x_out->cols);
      ++seen;
      if (seen == n_samples) break;
    }
  }
  if (seen == 0) throw ContractError("estimate_norm_factors: source yielded no rows");
  const double mean_in = sum_in / double(seen);
  if (mean_in <= 0)
    throw ContractError("estimate_norm_factors: mean input norm is zero");
  NormFactors f;
  f.s_in = float(sqrt_d / mean_in);
  if (source.has_targets()) {
    const double mean_out = sum_out / double(seen);
    if (mean_out <= 0)
      throw ContractError("estimate_norm_factors: mean target norm is zero");
    f.s_out = float(sqrt_d / mean_out);
  } else {
    f.s_out = f.s_in;
  }
  return f;
}

void apply_norm(ActivationBatch& batch, const NormFactors& factors) {
  scale(factors.s_in, batch.x_in.data.data(), batch.x_in.size());
  if (batch.x_out)
    scale(factors.s_out, batch.x_out->data.data(), batch.x_out->size());
}

SaeParams<float> fold_norm_into_params(const SaeParams<float>& params,
                                       const NormFactors& factors) {
  SaeParams<float> out = params;
  const float dec_scale = factors.s_in / factors.s_out;
  if (dec_scale != 1.0f)
    scale(dec_scale, out.w_dec.data.data(), out.w_dec.size());
  scale(1.0f / factors.s_out, out.b_dec.data(), out.b_dec.size());
  scale(1.0f / factors.s_in, out.b_enc.data(), out.b_enc.size());
  return out;
}

SaeParams<float> unitize_decoder(const SaeParams<float>& params) {
  const std::size_t F = params.w_dec.rows;
  const std::size_t D = params.w_dec.cols;
  std::vector<std::uint32_t> dead;
  std::vector<double> norms(F);
  for (std::size_t i = 0; i < F; ++i) {
    norms[i] = nrm2(params.dec_col(i), D);
    if (norms[i] < 1e-12) dead.push_back(std::uint32_t(i));
  }
  if (!dead.empty()) {
    std::string msg = "unitize_decoder: " + std::to_string(dead.size()) +
                      " dead decoder column(s):";
    for (std::size_t j = 0; j < std::min<std::size_t>(dead.size(), 16); ++j)
      msg += " " + std::to_string(dead[j]);
    if (dead.size() > 16) msg += " ...";
    throw DeadFeatureError(msg, std::move(dead));
  }
  SaeParams<float> out = params;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < std::int64_t(F); ++i) {
    const float inv = float(1.0 / norms[i]);
    const float n = float(norms[i]);
    scale(inv, out.dec_col(i), D);
    scale(n, out.w_enc.row(i), D);
    out.b_enc[i] *= n;
  }
  return out;
}

float calibrate_jumprelu(SaeConfig& config, SaeParams<float>& params,
                         ActivationSource& source, int k, std::int64_t n_tokens) {
  if (n_tokens < 10000)
    throw ContractError("calibrate_jumprelu: need n_tokens >= 10000");
  if (k < 1 || k > config.n_features)
    throw ContractError("calibrate_jumprelu: k out of range");
  params.check_dims(config);

  const std::vector<float> col_norms = decoder_col_norms(params);
  const std::size_t F = std::size_t(config.n_features);

  std::vector<float> pooled;
  pooled.reserve(std::size_t(n_tokens) * std::size_t(std::min(k * 8, int(F))));
  std::int64_t seen = 0;
  ActivationBatch batch;
  std::vector<float> pre(F);
  while (seen < n_tokens) {
    const std::size_t got =
        source.next(std::size_t(std::min<std::int64_t>(n_tokens - seen, 8192)), batch);
    if (got == 0) break;
    for (std::size_t r = 0; r < got && seen < n_tokens; ++r) {
      if (!batch.valid[r]) continue;
      preactivate_into(params, batch.x_in.row(r), pre.data());
      for (std::size_t i = 0; i < F; ++i) {
        const float w = pre[i] * col_norms[i];
        if (w > 0.0f) pooled.push_back(w);
      }
      ++seen;
    }
  }
  if (seen < n_tokens)
    throw DataExhaustedError("calibrate_jumprelu: source exhausted after " +
                                 std::to_string(seen) + " of " +
                                 std::to_string(n_tokens) + " tokens",
                             seen);

  const std::uint64_t want = std::uint64_t(k) * std::uint64_t(n_tokens);
  if (pooled.size() < want)
    throw ContractError("calibrate_jumprelu: only " + std::to_string(pooled.size()) +
                        " positive preactivations pooled; need " +
                        std::to_string(want) + " (sparsity target unreachable)");

  // Split the pool at the want-th largest value and put the threshold in
  // the gap below it: exactly K values per token clear the strict
  // comparison on the calibration pool, so mean L0 is K in expectation on
  // fresh data.
  std::nth_element(pooled.begin(), pooled.begin() + (want - 1), pooled.end(),
                   std::greater<float>());
  const float kept = pooled[want - 1];
  float next = 0.0f;
  for (std::uint64_t q = want; q < pooled.size(); ++q)
    if (pooled[q] < kept) next = std::max(next, pooled[q]);
  const float theta = 0.5f * (kept + next);

  params.theta = theta;
  config.variant = Variant::JumpRelu;
  return theta;
}

}  // namespace sae
