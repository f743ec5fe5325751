// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "sae/config.hpp"
#include "sae/mat.hpp"

namespace sae {

// Weight tensors of one SAE. The decoder is stored feature-major: row i of
// `w_dec` is decoder column i (the direction of feature i, length D). The
// on-disk checkpoint serializes the logical D x F row-major layout; see
// docs/formats.md.
template <typename T>
struct SaeParams {
  Mat<T> w_enc;            // F x D, row i = encoder row of feature i
  std::vector<T> b_enc;    // F
  Mat<T> w_dec;            // F x D storage; row i = decoder column i
  std::vector<T> b_dec;    // D
  std::optional<T> theta;  // JumpReLU threshold, inference only

  int d_model() const { return int(w_enc.cols); }
  int n_features() const { return int(w_enc.rows); }

  const T* dec_col(std::size_t i) const { return w_dec.row(i); }
  T* dec_col(std::size_t i) { return w_dec.row(i); }

  void check_dims(const SaeConfig& cfg) const {
    const auto F = std::size_t(cfg.n_features);
    const auto D = std::size_t(cfg.d_model);
    if (w_enc.rows != F || w_enc.cols != D || b_enc.size() != F ||
        w_dec.rows != F || w_dec.cols != D || b_dec.size() != D)
      throw ContractError("params/config dimension mismatch (D=" +
                          std::to_string(cfg.d_model) +
                          ", F=" + std::to_string(cfg.n_features) + ")");
    if (cfg.variant == Variant::JumpRelu && !theta.has_value())
      throw ContractError("JumpReLU variant requires a calibrated theta");
  }
};

// 2-norm of every decoder column, accumulated in double.
template <typename T>
std::vector<T> decoder_col_norms(const SaeParams<T>& p) {
  const std::size_t F = p.w_dec.rows;
  std::vector<T> norms(F);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < std::int64_t(F); ++i)
    norms[i] = T(nrm2(p.dec_col(i), p.w_dec.cols));
  return norms;
}

// Decoder columns drawn Kaiming-uniform, then rescaled to 2-norm
// sqrt(2D/F) = sqrt(2/expansion). Encoder is the decoder transpose for
// autoencoders and an independent Kaiming-uniform draw for transcoders
// (input and output distributions differ, so tying buys nothing there).
// Biases start at zero. Deterministic given the seed.
template <typename T>
SaeParams<T> init_params(const SaeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t F = std::size_t(cfg.n_features);
  const std::size_t D = std::size_t(cfg.d_model);

  SaeParams<T> p;
  p.w_enc = Mat<T>(F, D);
  p.b_enc.assign(F, T(0));
  p.w_dec = Mat<T>(F, D);
  p.b_dec.assign(D, T(0));

  std::mt19937_64 rng(seed);
  const double dec_bound = std::sqrt(6.0 / double(F));
  std::uniform_real_distribution<double> dec_dist(-dec_bound, dec_bound);
  for (std::size_t i = 0; i < F; ++i) {
    T* col = p.dec_col(i);
    for (std::size_t d = 0; d < D; ++d) col[d] = T(dec_dist(rng));
  }

  const double target = std::sqrt(2.0 * double(D) / double(F));
  for (std::size_t i = 0; i < F; ++i) {
    T* col = p.dec_col(i);
    const double norm = nrm2(col, D);
    const T s = T(target / norm);
    for (std::size_t d = 0; d < D; ++d) col[d] *= s;
  }

  if (cfg.position_kind == PositionKind::Transcoder) {
    const double enc_bound = std::sqrt(6.0 / double(D));
    std::uniform_real_distribution<double> enc_dist(-enc_bound, enc_bound);
    for (std::size_t i = 0; i < F; ++i) {
      T* row = p.w_enc.row(i);
      for (std::size_t d = 0; d < D; ++d) row[d] = T(enc_dist(rng));
    }
  } else {
    // Tied start: encoder row i equals decoder column i. Same storage
    // layout on both sides, so this is a plain copy.
    p.w_enc.data = p.w_dec.data;
  }
  return p;
}

// One sparse feature vector: strictly positive activations at strictly
// increasing indices.
template <typename T>
struct FeatureVec {
  std::vector<std::uint32_t> idx;
  std::vector<T> val;

  std::size_t nnz() const { return idx.size(); }
};

}  // namespace sae
