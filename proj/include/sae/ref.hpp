// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "sae/batch.hpp"
#include "sae/config.hpp"
#include "sae/params.hpp"

// Serial reference implementations: plain scalar loops, full sorts, dense
// matvecs. These stay deliberately naive so they can serve as independent
// oracles for the parallel kernels and as the baseline in the benchmark.
namespace sae::ref {

template <typename T>
std::vector<T> preactivate(const SaeParams<T>& p, const std::vector<T>& x) {
  const std::size_t F = p.w_enc.rows;
  const std::size_t D = p.w_enc.cols;
  std::vector<T> out(F);
  for (std::size_t i = 0; i < F; ++i) {
    T acc = p.b_enc[i];
    for (std::size_t d = 0; d < D; ++d) acc += p.w_enc(i, d) * x[d];
    out[i] = acc > T(0) ? acc : T(0);
  }
  return out;
}

// Full stable sort on (weighted score desc, index asc), take the first k.
template <typename T>
std::vector<std::uint8_t> topk_mask_fullsort(const std::vector<T>& preact,
                                             const std::vector<T>& norms, int k) {
  const std::size_t F = preact.size();
  std::vector<std::uint32_t> order(F);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     return preact[a] * norms[a] > preact[b] * norms[b];
                   });
  std::vector<std::uint8_t> mask(F, 0);
  for (int j = 0; j < k; ++j) mask[order[std::size_t(j)]] = 1;
  return mask;
}

template <typename T>
FeatureVec<T> encode(const SaeConfig& cfg, const SaeParams<T>& p,
                     const std::vector<T>& x) {
  const std::vector<T> pre = sae::ref::preactivate(p, x);
  std::vector<T> norms(p.w_dec.rows);
  for (std::size_t i = 0; i < norms.size(); ++i) {
    double s = 0;
    for (std::size_t d = 0; d < p.w_dec.cols; ++d)
      s += double(p.w_dec(i, d)) * double(p.w_dec(i, d));
    norms[i] = T(std::sqrt(s));
  }
  FeatureVec<T> f;
  std::vector<std::uint8_t> keep(pre.size(), 1);
  if (cfg.variant == Variant::TopK)
    keep = topk_mask_fullsort(pre, norms, cfg.k);
  for (std::size_t i = 0; i < pre.size(); ++i) {
    bool on = false;
    switch (cfg.variant) {
      case Variant::Vanilla: on = pre[i] > T(0); break;
      case Variant::TopK: on = keep[i] && pre[i] > T(0); break;
      case Variant::JumpRelu: on = pre[i] * norms[i] > *p.theta; break;
    }
    if (on) {
      f.idx.push_back(std::uint32_t(i));
      f.val.push_back(pre[i]);
    }
  }
  return f;
}

// Densify the feature vector, then a dense matvec over the full decoder.
template <typename T>
std::vector<T> decode_dense(const SaeParams<T>& p, const FeatureVec<T>& f) {
  const std::size_t F = p.w_dec.rows;
  const std::size_t D = p.w_dec.cols;
  std::vector<T> dense(F, T(0));
  for (std::size_t n = 0; n < f.nnz(); ++n) dense[f.idx[n]] = f.val[n];
  std::vector<T> x(D);
  for (std::size_t d = 0; d < D; ++d) {
    T acc = p.b_dec[d];
    for (std::size_t i = 0; i < F; ++i) acc += p.w_dec(i, d) * dense[i];
    x[d] = acc;
  }
  return x;
}

template <typename T>
double mse(const T* target, const T* xhat, std::size_t d) {
  double s = 0;
  for (std::size_t j = 0; j < d; ++j) {
    const double r = double(xhat[j]) - double(target[j]);
    s += r * r;
  }
  return s / double(d);
}

template <typename T>
double mse_batch(const Mat<T>& target, const Mat<T>& xhat) {
  double s = 0;
  for (std::size_t n = 0; n < target.rows; ++n)
    s += mse(target.row(n), xhat.row(n), target.cols);
  return s / double(target.rows);
}

}  // namespace sae::ref
