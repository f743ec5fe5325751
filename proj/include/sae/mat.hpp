// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace sae {

// Dense row-major matrix. Deliberately minimal: contiguous storage and row
// pointers, no expression templates.
template <typename T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, T fill = T(0))
      : rows(r), cols(c), data(r * c, fill) {}

  T* row(std::size_t i) { return data.data() + i * cols; }
  const T* row(std::size_t i) const { return data.data() + i * cols; }
  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  T operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  void set_zero() { data.assign(rows * cols, T(0)); }
};

// Jagged rows of (index, value) pairs in CSR layout. Row i occupies
// [off[i], off[i+1]); indices within a row are strictly increasing.
template <typename T>
struct SparseRows {
  std::vector<std::uint64_t> off{0};
  std::vector<std::uint32_t> idx;
  std::vector<T> val;

  std::size_t n_rows() const { return off.size() - 1; }
  std::size_t nnz() const { return idx.size(); }
  std::size_t row_nnz(std::size_t i) const { return off[i + 1] - off[i]; }

  void clear() {
    off.assign(1, 0);
    idx.clear();
    val.clear();
  }

  // Value at (row, feature); 0 when the feature is not stored.
  T at(std::size_t row, std::uint32_t feature) const {
    for (std::uint64_t p = off[row]; p < off[row + 1]; ++p) {
      if (idx[p] == feature) return val[p];
      if (idx[p] > feature) break;
    }
    return T(0);
  }
};

// Vectorizable inner product. The simd reduction explicitly permits
// reassociation; results are stable for a fixed binary.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s = T(0);
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
inline void scale(T alpha, T* x, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

// Squared 2-norm accumulated in double regardless of T.
template <typename T>
inline double nrm2sq(const T* x, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += double(x[i]) * double(x[i]);
  return s;
}

template <typename T>
inline double nrm2(const T* x, std::size_t n) {
  return std::sqrt(nrm2sq(x, n));
}

}  // namespace sae
