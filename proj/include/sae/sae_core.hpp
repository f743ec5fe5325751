// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "sae/batch.hpp"
#include "sae/config.hpp"
#include "sae/params.hpp"

namespace sae {

// ReLU(W_enc x + b_enc) into out[F].
template <typename T>
void preactivate_into(const SaeParams<T>& p, const T* x, T* out) {
  const std::size_t F = p.w_enc.rows;
  const std::size_t D = p.w_enc.cols;
  for (std::size_t i = 0; i < F; ++i) {
    const T v = dot(p.w_enc.row(i), x, D) + p.b_enc[i];
    out[i] = v > T(0) ? v : T(0);
  }
}

template <typename T>
std::vector<T> preactivate(const SaeParams<T>& p, const std::vector<T>& x) {
  if (x.size() != p.w_enc.cols)
    throw ContractError("preactivate: input length " + std::to_string(x.size()) +
                        " != d_model " + std::to_string(p.w_enc.cols));
  std::vector<T> out(p.w_enc.rows);
  preactivate_into(p, x.data(), out.data());
  return out;
}

// Indices of the k largest weighted scores preact[i] * col_norms[i].
// Ties break toward the lower index so results are reproducible across
// platforms. Returned indices are sorted ascending.
template <typename T>
void topk_indices(const T* preact, const T* col_norms, std::size_t f, int k,
                  std::vector<std::uint32_t>& out) {
  out.resize(f);
  std::iota(out.begin(), out.end(), 0u);
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    const T sa = preact[a] * col_norms[a];
    const T sb = preact[b] * col_norms[b];
    if (sa != sb) return sa > sb;
    return a < b;
  };
  if (std::size_t(k) < f)
    std::nth_element(out.begin(), out.begin() + k, out.end(), better);
  out.resize(std::size_t(k));
  std::sort(out.begin(), out.end());
}

// Binary mask with exactly k ones at the winning indices.
template <typename T>
std::vector<std::uint8_t> norm_weighted_topk(const std::vector<T>& preact,
                                             const std::vector<T>& dec_col_norms,
                                             int k) {
  const std::size_t F = preact.size();
  if (dec_col_norms.size() != F)
    throw ContractError("norm_weighted_topk: norms length mismatch");
  if (k < 1 || std::size_t(k) > F)
    throw ContractError("norm_weighted_topk: k=" + std::to_string(k) +
                        " out of range [1, " + std::to_string(F) + "]");
  std::vector<std::uint32_t> sel;
  topk_indices(preact.data(), dec_col_norms.data(), F, k, sel);
  std::vector<std::uint8_t> mask(F, 0);
  for (auto i : sel) mask[i] = 1;
  return mask;
}

// Sparse selection for one row. `preact` is the ReLU'd preactivation;
// only strictly positive values are ever stored. TopK stores the
// unweighted preactivation of the selected features; the decoder-norm
// weighting exists only inside mask selection and threshold comparison.
template <typename T>
void select_features(const SaeConfig& cfg, const T* preact, const T* col_norms,
                     int k_eff, T theta, std::vector<std::uint32_t>& scratch,
                     std::vector<std::uint32_t>& out_idx, std::vector<T>& out_val) {
  const std::size_t F = std::size_t(cfg.n_features);
  out_idx.clear();
  out_val.clear();
  switch (cfg.variant) {
    case Variant::Vanilla:
      for (std::size_t i = 0; i < F; ++i)
        if (preact[i] > T(0)) {
          out_idx.push_back(std::uint32_t(i));
          out_val.push_back(preact[i]);
        }
      break;
    case Variant::TopK:
      topk_indices(preact, col_norms, F, k_eff, scratch);
      for (auto i : scratch)
        if (preact[i] > T(0)) {
          out_idx.push_back(i);
          out_val.push_back(preact[i]);
        }
      break;
    case Variant::JumpRelu:
      for (std::size_t i = 0; i < F; ++i)
        if (preact[i] * col_norms[i] > theta) {
          out_idx.push_back(std::uint32_t(i));
          out_val.push_back(preact[i]);
        }
      break;
  }
}

template <typename T>
FeatureVec<T> encode(const SaeConfig& cfg, const SaeParams<T>& p,
                     const std::vector<T>& x) {
  p.check_dims(cfg);
  const std::vector<T> pre = preactivate(p, x);
  const std::vector<T> norms = decoder_col_norms(p);
  const T theta = p.theta.value_or(T(0));
  std::vector<std::uint32_t> scratch;
  FeatureVec<T> f;
  select_features(cfg, pre.data(), norms.data(), cfg.k, theta, scratch, f.idx, f.val);
  return f;
}

// W_dec f + b_dec, exploiting sparsity: O(D * nnz).
template <typename T>
std::vector<T> decode(const SaeParams<T>& p, const FeatureVec<T>& f) {
  const std::size_t D = p.w_dec.cols;
  std::vector<T> x(p.b_dec.begin(), p.b_dec.end());
  for (std::size_t n = 0; n < f.nnz(); ++n) {
    if (f.idx[n] >= p.w_dec.rows)
      throw ContractError("decode: feature index " + std::to_string(f.idx[n]) +
                          " out of range");
    axpy(f.val[n], p.dec_col(f.idx[n]), x.data(), D);
  }
  return x;
}

template <typename T>
std::pair<FeatureVec<T>, std::vector<T>> forward(const SaeConfig& cfg,
                                                 const SaeParams<T>& p,
                                                 const std::vector<T>& x) {
  FeatureVec<T> f = encode(cfg, p, x);
  std::vector<T> xhat = decode(p, f);
  return {std::move(f), std::move(xhat)};
}

// ---------------------------------------------------------------------------
// Batched kernels. Rows are independent, so these parallelize as pure maps
// and produce bit-identical results for any thread count.
// ---------------------------------------------------------------------------

template <typename T>
void encode_batch(const SaeConfig& cfg, const SaeParams<T>& p, const Mat<T>& x,
                  int k_eff, const std::vector<T>& col_norms, SparseRows<T>& out) {
  p.check_dims(cfg);
  if (x.cols != std::size_t(cfg.d_model))
    throw ContractError("encode_batch: batch width != d_model");
  const std::size_t N = x.rows;
  const std::size_t F = std::size_t(cfg.n_features);
  const T theta = p.theta.value_or(T(0));

  std::vector<std::vector<std::uint32_t>> row_idx(N);
  std::vector<std::vector<T>> row_val(N);
#pragma omp parallel
  {
    std::vector<T> pre(F);
    std::vector<std::uint32_t> scratch;
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < std::int64_t(N); ++n) {
      preactivate_into(p, x.row(n), pre.data());
      select_features(cfg, pre.data(), col_norms.data(), k_eff, theta, scratch,
                      row_idx[n], row_val[n]);
    }
  }

  out.clear();
  out.off.resize(N + 1);
  out.off[0] = 0;
  for (std::size_t n = 0; n < N; ++n)
    out.off[n + 1] = out.off[n] + row_idx[n].size();
  out.idx.resize(out.off[N]);
  out.val.resize(out.off[N]);
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < std::int64_t(N); ++n) {
    std::copy(row_idx[n].begin(), row_idx[n].end(), out.idx.begin() + out.off[n]);
    std::copy(row_val[n].begin(), row_val[n].end(), out.val.begin() + out.off[n]);
  }
}

template <typename T>
void encode_batch(const SaeConfig& cfg, const SaeParams<T>& p, const Mat<T>& x,
                  SparseRows<T>& out) {
  encode_batch(cfg, p, x, cfg.k, decoder_col_norms(p), out);
}

template <typename T>
void decode_batch(const SaeParams<T>& p, const SparseRows<T>& codes, Mat<T>& xhat) {
  const std::size_t N = codes.n_rows();
  const std::size_t D = p.w_dec.cols;
  xhat = Mat<T>(N, D);
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < std::int64_t(N); ++n) {
    T* row = xhat.row(n);
    std::copy(p.b_dec.begin(), p.b_dec.end(), row);
    for (std::uint64_t q = codes.off[n]; q < codes.off[n + 1]; ++q)
      axpy(codes.val[q], p.dec_col(codes.idx[q]), row, D);
  }
}

template <typename T>
void forward_batch(const SaeConfig& cfg, const SaeParams<T>& p, const Mat<T>& x,
                   SparseRows<T>& codes, Mat<T>& xhat) {
  encode_batch(cfg, p, x, codes);
  decode_batch(p, codes, xhat);
}

}  // namespace sae
