// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sae/params.hpp"

namespace sae {

// Cosine similarity between decoder column i of `a` and column j of `b`.
double decoder_cosine(const SaeParams<float>& a, int i, const SaeParams<float>& b,
                      int j);

struct NeighborResult {
  int query = 0;
  std::vector<std::pair<int, double>> neighbors;  // (feature, cosine) desc
  std::string source_label;
};

// Top-m features of `b` by cosine against column i of `a`, excluding the
// query itself when a and b are the same object. Ties break by index.
NeighborResult nearest_features(const SaeParams<float>& a, int i,
                                const SaeParams<float>& b, int m);

// sqrt(12 ln F / D): the similarity level below which a pair among F
// random directions in D dims is unremarkable (exceedance probability
// roughly 2/F).
double jl_epsilon(double f, double d);

// F iid uniform-on-sphere rows (normalized Gaussians), deterministic per
// (seed, row) so generation parallelizes.
Mat<float> random_unit_rows(int f, int d, std::uint64_t seed);

// Maximum pairwise cosine (signed, i < j) among unit rows; blocked so the
// working set stays cache-sized at F in the tens of thousands.
double max_pairwise_cosine(const Mat<float>& unit_rows, int block = 512);

// Per-row of A: maximum cosine against all rows of B. Rows must be unit.
std::vector<double> matched_max_cosines(const Mat<float>& a_unit,
                                        const Mat<float>& b_unit, int block = 512);

// Empirical random baseline for the JL threshold.
double random_max_cosine(int f, int d, std::uint64_t seed, int block = 512);

struct MatchingCdf {
  std::vector<double> matched;          // sorted ascending
  std::vector<double> random_baseline;  // same sizes, fresh random SAEs
};

// For every feature of `a`, the max cosine against all of `b`, plus the
// baseline from two random SAEs of the same shapes.
MatchingCdf cross_sae_matching_cdf(const SaeParams<float>& a,
                                   const SaeParams<float>& b, std::uint64_t seed);

// Two-sample Kolmogorov–Smirnov statistic over sorted samples.
double ks_statistic(const std::vector<double>& sorted_a,
                    const std::vector<double>& sorted_b);

// Unit-row matrix of a decoder (columns normalized on the fly).
Mat<float> unit_decoder_rows(const SaeParams<float>& p);

}  // namespace sae
