// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sae/mat.hpp"

namespace sae {

// A block of input vectors, optional reconstruction targets (transcoders),
// and per-row validity flags. Rows with valid=0 are sequence-boundary
// tokens and are never consumed by training or evaluation.
template <typename T>
struct ActivationBatchT {
  Mat<T> x_in;                   // N x D
  std::optional<Mat<T>> x_out;   // N x D, transcoder targets
  std::vector<std::uint8_t> valid;

  std::size_t n_rows() const { return x_in.rows; }
  bool has_targets() const { return x_out.has_value(); }

  const Mat<T>& targets() const { return x_out ? *x_out : x_in; }

  std::size_t n_valid() const {
    std::size_t n = 0;
    for (auto v : valid) n += v ? 1 : 0;
    return n;
  }

  void resize(std::size_t n, std::size_t d, bool with_targets) {
    x_in = Mat<T>(n, d);
    if (with_targets)
      x_out = Mat<T>(n, d);
    else
      x_out.reset();
    valid.assign(n, 1);
  }
};

using ActivationBatch = ActivationBatchT<float>;

}  // namespace sae
