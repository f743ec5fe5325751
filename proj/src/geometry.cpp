// SPDX-License-Identifier: Apache-2.0
#include "sae/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sae/errors.hpp"

namespace sae {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double decoder_cosine(const SaeParams<float>& a, int i, const SaeParams<float>& b,
                      int j) {
  if (i < 0 || std::size_t(i) >= a.w_dec.rows || j < 0 ||
      std::size_t(j) >= b.w_dec.rows)
    throw ContractError("decoder_cosine: feature index out of range");
  if (a.w_dec.cols != b.w_dec.cols)
    throw ContractError("decoder_cosine: dimension mismatch");
  const std::size_t d = a.w_dec.cols;
  const double na = nrm2(a.dec_col(std::size_t(i)), d);
  const double nb = nrm2(b.dec_col(std::size_t(j)), d);
  if (na < 1e-12 || nb < 1e-12)
    throw ContractError("decoder_cosine: zero decoder column");
  double dp = 0;
  const float* ca = a.dec_col(std::size_t(i));
  const float* cb = b.dec_col(std::size_t(j));
  for (std::size_t t = 0; t < d; ++t) dp += double(ca[t]) * double(cb[t]);
  return dp / (na * nb);
}

NeighborResult nearest_features(const SaeParams<float>& a, int i,
                                const SaeParams<float>& b, int m) {
  const std::size_t Fb = b.w_dec.rows;
  const bool same = &a == &b;
  if (m < 0 || std::size_t(m) > Fb - (same ? 1 : 0))
    throw ContractError("nearest_features: m out of range");

  std::vector<std::pair<int, double>> all;
  all.reserve(Fb);
  for (std::size_t j = 0; j < Fb; ++j) {
    if (same && std::size_t(i) == j) continue;
    all.emplace_back(int(j), decoder_cosine(a, i, b, int(j)));
  }
  const auto better = [](const std::pair<int, double>& x,
                         const std::pair<int, double>& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  };
  if (std::size_t(m) < all.size())
    std::nth_element(all.begin(), all.begin() + m, all.end(), better);
  all.resize(std::size_t(m));
  std::sort(all.begin(), all.end(), better);

  NeighborResult result;
  result.query = i;
  result.neighbors = std::move(all);
  return result;
}

double jl_epsilon(double f, double d) {
  if (f < 2.0 || d < 1.0) throw ContractError("jl_epsilon: need F >= 2, D >= 1");
  return std::sqrt(12.0 * std::log(f) / d);
}

Mat<float> random_unit_rows(int f, int d, std::uint64_t seed) {
  Mat<float> rows(static_cast<std::size_t>(f), static_cast<std::size_t>(d));
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < f; ++i) {
    std::mt19937_64 rng(splitmix64(seed ^ std::uint64_t(i)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    float* row = rows.row(std::size_t(i));
    double sq = 0;
    for (int j = 0; j < d; ++j) {
      const double v = gauss(rng);
      row[j] = float(v);
      sq += v * v;
    }
    const float s = float(1.0 / std::sqrt(sq));
    for (int j = 0; j < d; ++j) row[j] *= s;
  }
  return rows;
}

double max_pairwise_cosine(const Mat<float>& unit_rows, int block) {
  const std::int64_t f = std::int64_t(unit_rows.rows);
  const std::size_t d = unit_rows.cols;
  if (f < 2) throw ContractError("max_pairwise_cosine: need >= 2 rows");
  if (block < 1) block = 512;
  const std::int64_t nb = (f + block - 1) / block;

  // Upper-triangle block pairs, flattened for the parallel loop. The max
  // reduction is order-independent, so any schedule gives the same answer.
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (std::int32_t bi = 0; bi < nb; ++bi)
    for (std::int32_t bj = bi; bj < nb; ++bj) pairs.emplace_back(bi, bj);

  double global_max = -2.0;
#pragma omp parallel
  {
    double local_max = -2.0;
#pragma omp for schedule(dynamic)
    for (std::int64_t t = 0; t < std::int64_t(pairs.size()); ++t) {
      const std::int64_t i0 = std::int64_t(pairs[t].first) * block;
      const std::int64_t j0 = std::int64_t(pairs[t].second) * block;
      const std::int64_t i1 = std::min(i0 + block, f);
      const std::int64_t j1 = std::min(j0 + block, f);
      for (std::int64_t i = i0; i < i1; ++i) {
        const float* ri = unit_rows.row(std::size_t(i));
        for (std::int64_t j = std::max(j0, i + 1); j < j1; ++j) {
          const float c = dot(ri, unit_rows.row(std::size_t(j)), d);
          if (double(c) > local_max) local_max = double(c);
        }
      }
    }
#pragma omp critical
    global_max = std::max(global_max, local_max);
  }
  return global_max;
}

std::vector<double> matched_max_cosines(const Mat<float>& a_unit,
                                        const Mat<float>& b_unit, int block) {
  if (a_unit.cols != b_unit.cols)
    throw ContractError("matched_max_cosines: dimension mismatch");
  const std::int64_t fa = std::int64_t(a_unit.rows);
  const std::int64_t fb = std::int64_t(b_unit.rows);
  const std::size_t d = a_unit.cols;
  if (block < 1) block = 512;
  std::vector<double> best(std::size_t(fa), -2.0);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < fa; ++i) {
    const float* ri = a_unit.row(std::size_t(i));
    double m = -2.0;
    for (std::int64_t j0 = 0; j0 < fb; j0 += block) {
      const std::int64_t j1 = std::min(j0 + std::int64_t(block), fb);
      for (std::int64_t j = j0; j < j1; ++j) {
        const float c = dot(ri, b_unit.row(std::size_t(j)), d);
        if (double(c) > m) m = double(c);
      }
    }
    best[std::size_t(i)] = m;
  }
  return best;
}

double random_max_cosine(int f, int d, std::uint64_t seed, int block) {
  if (f < 2 || d < 1) throw ContractError("random_max_cosine: need F >= 2, D >= 1");
  const Mat<float> rows = random_unit_rows(f, d, seed);
  return max_pairwise_cosine(rows, block);
}

Mat<float> unit_decoder_rows(const SaeParams<float>& p) {
  Mat<float> rows = p.w_dec;
  for (std::size_t i = 0; i < rows.rows; ++i) {
    const double n = nrm2(rows.row(i), rows.cols);
    if (n < 1e-12)
      throw ContractError("unit_decoder_rows: zero decoder column " +
                          std::to_string(i));
    scale(float(1.0 / n), rows.row(i), rows.cols);
  }
  return rows;
}

MatchingCdf cross_sae_matching_cdf(const SaeParams<float>& a,
                                   const SaeParams<float>& b, std::uint64_t seed) {
  if (a.w_dec.cols != b.w_dec.cols)
    throw ContractError("cross_sae_matching_cdf: dimension mismatch");
  const Mat<float> au = unit_decoder_rows(a);
  const Mat<float> bu = unit_decoder_rows(b);

  MatchingCdf cdf;
  cdf.matched = matched_max_cosines(au, bu);
  std::sort(cdf.matched.begin(), cdf.matched.end());

  const Mat<float> ra = random_unit_rows(int(au.rows), int(au.cols), seed);
  const Mat<float> rb = random_unit_rows(int(bu.rows), int(bu.cols), seed + 1);
  cdf.random_baseline = matched_max_cosines(ra, rb);
  std::sort(cdf.random_baseline.begin(), cdf.random_baseline.end());
  return cdf;
}

double ks_statistic(const std::vector<double>& sorted_a,
                    const std::vector<double>& sorted_b) {
  if (sorted_a.empty() || sorted_b.empty())
    throw ContractError("ks_statistic: empty sample");
  std::size_t i = 0, j = 0;
  double ks = 0;
  while (i < sorted_a.size() && j < sorted_b.size()) {
    const double v = std::min(sorted_a[i], sorted_b[j]);
    while (i < sorted_a.size() && sorted_a[i] <= v) ++i;
    while (j < sorted_b.size() && sorted_b[j] <= v) ++j;
    const double fa = double(i) / double(sorted_a.size());
    const double fb = double(j) / double(sorted_b.size());
    ks = std::max(ks, std::abs(fa - fb));
  }
  return ks;
}

}  // namespace sae
