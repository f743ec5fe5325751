// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "sae/gradients.hpp"

namespace sae {

template <typename T>
struct AdamState {
  ParamTensors<T> m;
  ParamTensors<T> v;
  std::int64_t step_count = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  static AdamState zeros_like(const SaeParams<T>& p) {
    AdamState s;
    s.m = ParamTensors<T>::zeros_like(p);
    s.v = ParamTensors<T>::zeros_like(p);
    return s;
  }
};

namespace detail {

template <typename T>
void adam_update(T* param, T* m, T* v, const T* grad, std::size_t n, T lr,
                 T beta1, T beta2, T eps, T bc1, T bc2) {
#pragma omp parallel for simd schedule(static)
  for (std::int64_t i = 0; i < std::int64_t(n); ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * grad[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * grad[i] * grad[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace detail

// Standard bias-corrected Adam step over all four tensors.
template <typename T>
void adam_step(AdamState<T>& state, SaeParams<T>& params,
               const ParamTensors<T>& grads, T lr) {
  if (grads.w_enc.size() != params.w_enc.size() ||
      grads.w_dec.size() != params.w_dec.size() ||
      grads.b_enc.size() != params.b_enc.size() ||
      grads.b_dec.size() != params.b_dec.size())
    throw ContractError("adam_step: gradient/param shape mismatch");

  state.step_count += 1;
  const T bc1 = T(1) - T(std::pow(double(state.beta1), double(state.step_count)));
  const T bc2 = T(1) - T(std::pow(double(state.beta2), double(state.step_count)));

  detail::adam_update(params.w_enc.data.data(), state.m.w_enc.data.data(),
                      state.v.w_enc.data.data(), grads.w_enc.data.data(),
                      params.w_enc.size(), lr, state.beta1, state.beta2,
                      state.eps, bc1, bc2);
  detail::adam_update(params.b_enc.data(), state.m.b_enc.data(),
                      state.v.b_enc.data(), grads.b_enc.data(),
                      params.b_enc.size(), lr, state.beta1, state.beta2,
                      state.eps, bc1, bc2);
  detail::adam_update(params.w_dec.data.data(), state.m.w_dec.data.data(),
                      state.v.w_dec.data.data(), grads.w_dec.data.data(),
                      params.w_dec.size(), lr, state.beta1, state.beta2,
                      state.eps, bc1, bc2);
  detail::adam_update(params.b_dec.data(), state.m.b_dec.data(),
                      state.v.b_dec.data(), grads.b_dec.data(),
                      params.b_dec.size(), lr, state.beta1, state.beta2,
                      state.eps, bc1, bc2);
}

// Vanilla-SAE decoder constraint, first half: drop the gradient component
// parallel to each decoder column so the later renormalization does not
// fight the optimizer.
template <typename T>
void project_decoder_grads(const SaeParams<T>& params, ParamTensors<T>& grads) {
  const std::size_t F = params.w_dec.rows;
  const std::size_t D = params.w_dec.cols;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < std::int64_t(F); ++i) {
    const T* col = params.dec_col(i);
    T* gcol = grads.w_dec.row(i);
    const double cc = nrm2sq(col, D);
    if (cc <= 0) continue;
    double gc = 0;
    for (std::size_t d = 0; d < D; ++d) gc += double(gcol[d]) * double(col[d]);
    const T coef = T(gc / cc);
    for (std::size_t d = 0; d < D; ++d) gcol[d] -= coef * col[d];
  }
}

// Second half: snap every decoder column back to unit 2-norm after the step.
template <typename T>
void renormalize_decoder(SaeParams<T>& params) {
  const std::size_t F = params.w_dec.rows;
  const std::size_t D = params.w_dec.cols;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < std::int64_t(F); ++i) {
    T* col = params.dec_col(i);
    const double norm = nrm2(col, D);
    if (norm < 1e-30) continue;
    const T s = T(1.0 / norm);
    for (std::size_t d = 0; d < D; ++d) col[d] *= s;
  }
}

}  // namespace sae
