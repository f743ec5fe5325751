// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sae/batch.hpp"
#include "sae/sae_core.hpp"

namespace sae {

// Per-element mean: sum of squared residuals over D, averaged over rows.
template <typename T>
double mse_loss(const Mat<T>& target, const Mat<T>& xhat) {
  if (target.rows != xhat.rows || target.cols != xhat.cols)
    throw ContractError("mse_loss: shape mismatch");
  if (target.rows == 0) throw ContractError("mse_loss: empty batch");
  const std::size_t N = target.rows;
  const std::size_t D = target.cols;
  std::vector<double> row_sq(N);
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < std::int64_t(N); ++n) {
    double s = 0;
#pragma omp simd reduction(+ : s)
    for (std::size_t j = 0; j < D; ++j) {
      const double r = double(xhat(n, j)) - double(target(n, j));
      s += r * r;
    }
    row_sq[n] = s;
  }
  double total = 0;
  for (double s : row_sq) total += s;
  return total / (double(N) * double(D));
}

template <typename T>
double mse_loss(const std::vector<T>& target, const std::vector<T>& xhat) {
  if (target.size() != xhat.size() || target.empty())
    throw ContractError("mse_loss: shape mismatch");
  double s = 0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    const double r = double(xhat[j]) - double(target[j]);
    s += r * r;
  }
  return s / double(target.size());
}

// Mean per-token sum of activations (activations are nonnegative, so the
// L1 norm is the plain sum).
template <typename T>
double l1_term(const SparseRows<T>& codes) {
  double s = 0;
  for (const T v : codes.val) s += double(v);
  return s / double(codes.n_rows());
}

// MSE plus the sparsity penalty. Rejects non-Vanilla configs: TopK holds
// sparsity by construction and takes plain MSE.
template <typename T>
double vanilla_loss(const SaeConfig& cfg, const SaeParams<T>& p,
                    const ActivationBatchT<T>& batch) {
  if (cfg.variant != Variant::Vanilla)
    throw ContractError("vanilla_loss requires variant=Vanilla");
  SparseRows<T> codes;
  Mat<T> xhat;
  forward_batch(cfg, p, batch.x_in, codes, xhat);
  return mse_loss(batch.targets(), xhat) + double(cfg.l1_coeff) * l1_term(codes);
}

// Training objective for any trainable variant, with the TopK width
// overridable for annealing. Used directly by the finite-difference tests.
template <typename T>
double training_loss(const SaeConfig& cfg, const SaeParams<T>& p,
                     const ActivationBatchT<T>& batch, int k_eff) {
  if (cfg.variant == Variant::JumpRelu)
    throw ContractError("JumpReLU is an inference-only variant");
  SparseRows<T> codes;
  encode_batch(cfg, p, batch.x_in, k_eff, decoder_col_norms(p), codes);
  Mat<T> xhat;
  decode_batch(p, codes, xhat);
  double loss = mse_loss(batch.targets(), xhat);
  if (cfg.variant == Variant::Vanilla)
    loss += double(cfg.l1_coeff) * l1_term(codes);
  return loss;
}

}  // namespace sae
