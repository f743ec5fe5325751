// SPDX-License-Identifier: Apache-2.0
#include "sae/activations.hpp"

#include <algorithm>
#include <cmath>

namespace sae {

std::size_t collect_rows(ActivationSource& src, std::size_t n, ActivationBatch& out) {
  out.resize(n, std::size_t(src.d_model()), src.has_targets());
  const std::size_t d = std::size_t(src.d_model());
  std::size_t have = 0;
  ActivationBatch chunk;
  while (have < n) {
    const std::size_t got = src.next(n - have, chunk);
    if (got == 0) break;
    for (std::size_t r = 0; r < got; ++r) {
      std::copy_n(chunk.x_in.row(r), d, out.x_in.row(have + r));
      if (out.x_out && chunk.x_out)
        std::copy_n(chunk.x_out->row(r), d, out.x_out->row(have + r));
      out.valid[have + r] = chunk.valid[r];
    }
    have += got;
  }
  if (have < n) {
    out.x_in.rows = have;
    out.x_in.data.resize(have * d);
    if (out.x_out) {
      out.x_out->rows = have;
      out.x_out->data.resize(have * d);
    }
    out.valid.resize(have);
  }
  return have;
}

SyntheticDictionary make_dictionary(int g, int d, float fire_prob,
                                    MagnitudeDist magnitude, float noise_sigma,
                                    std::uint64_t seed) {
  if (g <= d)
    throw ContractError("synthetic dictionary must be overcomplete (G > D)");
  if (fire_prob <= 0.0f || fire_prob >= 1.0f)
    throw ContractError("fire_prob must be in (0,1)");
  SyntheticDictionary dict;
  dict.fire_prob = fire_prob;
  dict.magnitude = magnitude;
  dict.noise_sigma = noise_sigma;
  dict.seed = seed;
  dict.ground_truth = Mat<float>(std::size_t(g), std::size_t(d));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < g; ++i) {
    float* row = dict.ground_truth.row(std::size_t(i));
    double sq = 0;
    for (int j = 0; j < d; ++j) {
      const double v = gauss(rng);
      row[j] = float(v);
      sq += v * v;
    }
    const float s = float(1.0 / std::sqrt(sq));
    for (int j = 0; j < d; ++j) row[j] *= s;
  }
  return dict;
}

SyntheticDictionary make_default_dictionary(std::uint64_t seed) {
  return make_dictionary(256, 64, 5.0f / 256.0f, MagnitudeDist{}, 0.01f, seed);
}

SyntheticGenerator::SyntheticGenerator(SyntheticDictionary dict,
                                       std::optional<Mat<float>> out_dict,
                                       std::optional<std::uint64_t> stream_seed)
    : dict_(std::move(dict)),
      out_dict_(std::move(out_dict)),
      rng_(stream_seed.value_or(dict_.seed + 1)) {
  if (out_dict_ && (out_dict_->rows != dict_.ground_truth.rows))
    throw ContractError("output dictionary must have the same feature count");
}

void SyntheticGenerator::sample(std::size_t n, ActivationBatch& out,
                                SparseRows<float>* codes) {
  const std::size_t d = std::size_t(dict_.d());
  const std::size_t g = std::size_t(dict_.g());
  const std::size_t d_out = out_dict_ ? out_dict_->cols : 0;
  out.resize(n, d, out_dict_.has_value());
  if (out_dict_) *out.x_out = Mat<float>(n, d_out);
  if (codes) codes->clear();

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    float* x = out.x_in.row(r);
    std::fill_n(x, d, 0.0f);
    float* y = out_dict_ ? out.x_out->row(r) : nullptr;
    if (y) std::fill_n(y, d_out, 0.0f);
    for (std::size_t i = 0; i < g; ++i) {
      if (uni(rng_) >= double(dict_.fire_prob)) continue;
      double m = 0;
      if (dict_.magnitude.kind == MagnitudeDist::Kind::UniformOnInterval)
        m = dict_.magnitude.a + uni(rng_) * (dict_.magnitude.b - dict_.magnitude.a);
      else
        m = -std::log(1.0 - uni(rng_)) / dict_.magnitude.a;
      axpy(float(m), dict_.ground_truth.row(i), x, d);
      if (y) axpy(float(m), out_dict_->row(i), y, d_out);
      if (codes) {
        codes->idx.push_back(std::uint32_t(i));
        codes->val.push_back(float(m));
      }
    }
    if (codes) codes->off.push_back(codes->idx.size());
    if (dict_.noise_sigma > 0.0f)
      for (std::size_t j = 0; j < d; ++j)
        x[j] += float(double(dict_.noise_sigma) * gauss(rng_));
  }
}

SyntheticSource::SyntheticSource(SyntheticDictionary dict,
                                 std::optional<Mat<float>> out_dict,
                                 std::string label,
                                 std::optional<std::uint64_t> stream_seed)
    : gen_(std::move(dict), std::move(out_dict), stream_seed),
      label_(std::move(label)) {}

bool SyntheticSource::has_targets() const { return gen_.has_targets(); }

std::size_t SyntheticSource::next(std::size_t n, ActivationBatch& out) {
  gen_.sample(n, out);
  return n;
}

std::size_t LimitedSource::next(std::size_t n, ActivationBatch& out) {
  if (remaining_ == 0) return 0;
  const std::size_t take = std::min(n, remaining_);
  const std::size_t got = inner_.next(take, out);
  remaining_ -= got;
  return got;
}

}  // namespace sae
