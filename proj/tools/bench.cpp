// SPDX-License-Identifier: Apache-2.0
//
// Timing comparison between the serial reference implementations and the
// OpenMP kernels on training-shaped workloads.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include <omp.h>

#include "sae/geometry.hpp"
#include "sae/gradients.hpp"
#include "sae/ref.hpp"
#include "sae/sae_core.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-28s serial %9.3f ms   openmp %9.3f ms   speedup %5.2fx\n", name,
              serial_ms, parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
  const int d = 64, f = 512, k = 5, n = 2048;
  std::printf("threads: %d   (D=%d F=%d K=%d batch=%d)\n", omp_get_max_threads(), d,
              f, k, n);

  sae::SaeConfig cfg;
  cfg.d_model = d;
  cfg.n_features = f;
  cfg.k = k;
  cfg.variant = sae::Variant::TopK;
  const auto params = sae::init_params<float>(cfg, 7);

  sae::ActivationBatchT<float> batch;
  batch.resize(n, d, false);
  std::mt19937_64 rng(11);
  std::normal_distribution<float> gauss(0.f, 1.f);
  for (auto& v : batch.x_in.data) v = gauss(rng);

  // encode: serial loop over rows vs the batched kernel
  {
    sae::SparseRows<float> codes;
    const double par = time_ms([&] { sae::encode_batch(cfg, params, batch.x_in, codes); }, 5);
    const double ser = time_ms(
        [&] {
          for (int r = 0; r < n; ++r) {
            std::vector<float> x(batch.x_in.row(r), batch.x_in.row(r) + d);
            volatile auto fv = sae::ref::encode(cfg, params, x).nnz();
            (void)fv;
          }
        },
        2);
    report("encode batch", ser, par);
  }

  // decode: sparse kernel vs dense reference
  {
    sae::SparseRows<float> codes;
    sae::encode_batch(cfg, params, batch.x_in, codes);
    sae::Mat<float> xhat;
    const double par = time_ms([&] { sae::decode_batch(params, codes, xhat); }, 10);
    const double ser = time_ms(
        [&] {
          for (int r = 0; r < n; ++r) {
            sae::FeatureVec<float> fv;
            for (auto q = codes.off[r]; q < codes.off[r + 1]; ++q) {
              fv.idx.push_back(codes.idx[q]);
              fv.val.push_back(codes.val[q]);
            }
            volatile float s = sae::ref::decode_dense(params, fv)[0];
            (void)s;
          }
        },
        2);
    report("decode batch", ser, par);
  }

  // gradients: one thread vs all threads (same kernel, fixed math)
  {
    const int threads = omp_get_max_threads();
    omp_set_num_threads(1);
    const double ser = time_ms([&] { sae::gradients(cfg, params, batch, k); }, 3);
    omp_set_num_threads(threads);
    const double par = time_ms([&] { sae::gradients(cfg, params, batch, k); }, 3);
    report("gradients", ser, par);
  }

  // blocked pairwise max cosine
  {
    const auto rows = sae::random_unit_rows(4096, 256, 3);
    const int threads = omp_get_max_threads();
    omp_set_num_threads(1);
    const double ser = time_ms([&] { sae::max_pairwise_cosine(rows, 512); }, 2);
    omp_set_num_threads(threads);
    const double par = time_ms([&] { sae::max_pairwise_cosine(rows, 512); }, 2);
    report("max pairwise cosine", ser, par);
  }
  return 0;
}
