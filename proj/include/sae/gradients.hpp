// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sae/batch.hpp"
#include "sae/losses.hpp"
#include "sae/sae_core.hpp"

namespace sae {

// Tensors shaped like SaeParams (used for gradients and Adam moments).
template <typename T>
struct ParamTensors {
  Mat<T> w_enc;
  std::vector<T> b_enc;
  Mat<T> w_dec;  // feature-major, like SaeParams
  std::vector<T> b_dec;

  static ParamTensors zeros_like(const SaeParams<T>& p) {
    ParamTensors t;
    t.w_enc = Mat<T>(p.w_enc.rows, p.w_enc.cols);
    t.b_enc.assign(p.b_enc.size(), T(0));
    t.w_dec = Mat<T>(p.w_dec.rows, p.w_dec.cols);
    t.b_dec.assign(p.b_dec.size(), T(0));
    return t;
  }
};

template <typename T>
struct GradResult {
  ParamTensors<T> grads;
  double loss = 0;      // full training objective
  double mse = 0;       // reconstruction part
  double l0_mean = 0;   // mean nonzeros per row
  std::vector<std::uint8_t> fired;  // F flags: active for >= 1 row
};

// Exact analytic gradients of the training loss with the TopK mask held
// fixed for the step: no gradient reaches unselected features, and the
// ReLU contributes zero gradient at non-positive preactivations. Vanilla
// adds the L1 subgradient (zero at inactive features).
//
// Parallelism is over parameter rows with serial in-order reduction over
// the batch, so results are bit-identical for any thread count.
template <typename T>
GradResult<T> gradients(const SaeConfig& cfg, const SaeParams<T>& p,
                        const ActivationBatchT<T>& batch, int k_eff) {
  p.check_dims(cfg);
  if (cfg.variant == Variant::JumpRelu)
    throw ContractError("gradients: JumpReLU is an inference-only variant");
  if (k_eff < 1 || k_eff > cfg.n_features)
    throw ContractError("gradients: effective k out of range");
  if (batch.n_rows() == 0) throw ContractError("gradients: empty batch");

  // Compact away invalid rows; sources normally deliver none.
  const ActivationBatchT<T>* b = &batch;
  ActivationBatchT<T> compacted;
  if (batch.n_valid() != batch.n_rows()) {
    const std::size_t D = batch.x_in.cols;
    compacted.resize(batch.n_valid(), D, batch.has_targets());
    std::size_t w = 0;
    for (std::size_t n = 0; n < batch.n_rows(); ++n) {
      if (!batch.valid[n]) continue;
      std::copy_n(batch.x_in.row(n), D, compacted.x_in.row(w));
      if (batch.has_targets())
        std::copy_n(batch.x_out->row(n), D, compacted.x_out->row(w));
      ++w;
    }
    b = &compacted;
  }
  if (b->n_rows() == 0) throw ContractError("gradients: no valid rows in batch");

  const std::size_t N = b->n_rows();
  const std::size_t D = std::size_t(cfg.d_model);
  const std::size_t F = std::size_t(cfg.n_features);
  const Mat<T>& target = b->targets();

  const std::vector<T> col_norms = decoder_col_norms(p);
  SparseRows<T> codes;
  encode_batch(cfg, p, b->x_in, k_eff, col_norms, codes);

  Mat<T> xhat;
  decode_batch(p, codes, xhat);

  // Residuals in place of xhat.
  Mat<T>& resid = xhat;
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < std::int64_t(N); ++n) {
    T* r = resid.row(n);
    const T* t = target.row(n);
    for (std::size_t j = 0; j < D; ++j) r[j] -= t[j];
  }

  std::vector<double> row_sq(N);
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < std::int64_t(N); ++n)
    row_sq[n] = nrm2sq(resid.row(n), D);
  double sq = 0;
  for (double s : row_sq) sq += s;

  GradResult<T> out;
  out.mse = sq / (double(N) * double(D));
  out.loss = out.mse;
  out.l0_mean = double(codes.nnz()) / double(N);
  if (cfg.variant == Variant::Vanilla)
    out.loss += double(cfg.l1_coeff) * l1_term(codes);
  if (!std::isfinite(out.loss))
    throw NonFiniteError("training loss is not finite (mse=" +
                         std::to_string(out.mse) + ")");

  out.grads = ParamTensors<T>::zeros_like(p);
  ParamTensors<T>& g = out.grads;
  const T c = T(2.0 / (double(N) * double(D)));

  // d(loss)/d(b_dec): residual column sums.
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < std::int64_t(D); ++j) {
    T acc = T(0);
    for (std::size_t n = 0; n < N; ++n) acc += resid(n, j);
    g.b_dec[j] = c * acc;
  }

  // Invert the sparse codes: per feature, the (row, value) pairs that used
  // it, ordered by row. Gives each parallel worker a contiguous weight row.
  std::vector<std::uint64_t> feat_off(F + 1, 0);
  for (std::size_t q = 0; q < codes.nnz(); ++q) feat_off[codes.idx[q] + 1]++;
  for (std::size_t i = 0; i < F; ++i) feat_off[i + 1] += feat_off[i];
  std::vector<std::uint32_t> feat_row(codes.nnz());
  std::vector<std::uint64_t> feat_pos(codes.nnz());  // position in codes arrays
  {
    std::vector<std::uint64_t> cursor(feat_off.begin(), feat_off.end() - 1);
    for (std::size_t n = 0; n < N; ++n)
      for (std::uint64_t q = codes.off[n]; q < codes.off[n + 1]; ++q) {
        const std::uint64_t slot = cursor[codes.idx[q]]++;
        feat_row[slot] = std::uint32_t(n);
        feat_pos[slot] = q;
      }
  }

  out.fired.assign(F, 0);
  for (std::size_t i = 0; i < F; ++i)
    out.fired[i] = feat_off[i + 1] > feat_off[i] ? 1 : 0;

  // d(loss)/d(f): backpropagated residual for every stored activation,
  // aligned with codes.val. Pure map over rows.
  std::vector<T> dfeat(codes.nnz());
  const T l1_g = cfg.variant == Variant::Vanilla
                     ? T(double(cfg.l1_coeff) / double(N))
                     : T(0);
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < std::int64_t(N); ++n) {
    const T* r = resid.row(n);
    for (std::uint64_t q = codes.off[n]; q < codes.off[n + 1]; ++q)
      dfeat[q] = c * dot(p.dec_col(codes.idx[q]), r, D) + l1_g;
  }

  // Decoder gradient: column i accumulates value-weighted residuals of the
  // rows that activated it. Encoder gradient: row i accumulates dfeat-
  // weighted inputs (stored values are strictly positive, so the ReLU
  // passes the gradient through unchanged).
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < std::int64_t(F); ++i) {
    T* gdec = g.w_dec.row(i);
    T* genc = g.w_enc.row(i);
    T gbias = T(0);
    for (std::uint64_t s = feat_off[i]; s < feat_off[i + 1]; ++s) {
      const std::uint32_t n = feat_row[s];
      const std::uint64_t q = feat_pos[s];
      axpy(c * codes.val[q], resid.row(n), gdec, D);
      axpy(dfeat[q], b->x_in.row(n), genc, D);
      gbias += dfeat[q];
    }
    g.b_enc[i] = gbias;
  }

  return out;
}

}  // namespace sae
