// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sae/batch.hpp"
#include "sae/errors.hpp"
#include "sae/mat.hpp"

namespace sae {

// Streaming producer of activation rows. next() appends up to n rows into
// `out` (replacing its contents) and returns the number produced; 0 means
// the stream is exhausted.
class ActivationSource {
 public:
  virtual ~ActivationSource() = default;
  virtual int d_model() const = 0;
  virtual bool has_targets() const = 0;
  virtual std::size_t next(std::size_t n, ActivationBatch& out) = 0;
  virtual std::string label() const { return ""; }
};

// Keep calling source.next until `n` rows are collected or the stream ends.
// Returns rows collected.
std::size_t collect_rows(ActivationSource& src, std::size_t n, ActivationBatch& out);

struct MagnitudeDist {
  enum class Kind { UniformOnInterval, Exponential };
  Kind kind = Kind::UniformOnInterval;
  double a = 0.5;  // lo (uniform) or rate (exponential)
  double b = 2.0;  // hi (uniform), unused for exponential
};

// Ground-truth overcomplete dictionary: G unit-norm rows in D dims. Each
// generated row activates every dictionary feature independently with
// fire_prob, scales it by a magnitude draw, and adds isotropic Gaussian
// noise. Embodies the planted-features setup the recovery tests check
// against.
struct SyntheticDictionary {
  Mat<float> ground_truth;  // G x D, unit-norm rows
  float fire_prob = 0.0f;
  MagnitudeDist magnitude;
  float noise_sigma = 0.01f;
  std::uint64_t seed = 0;

  int g() const { return int(ground_truth.rows); }
  int d() const { return int(ground_truth.cols); }
};

// Random unit-norm dictionary; G > D enforces overcompleteness.
SyntheticDictionary make_dictionary(int g, int d, float fire_prob,
                                    MagnitudeDist magnitude, float noise_sigma,
                                    std::uint64_t seed);

// Desk-scale defaults: D=64, G=256, expected active count ~5 per row,
// magnitudes Uniform(0.5, 2), sigma 0.01.
SyntheticDictionary make_default_dictionary(std::uint64_t seed);

// Draws batches from a dictionary; optionally returns the sparse codes so
// tests can check recovery. With `out_dict` set, targets are generated
// from the same codes through a second dictionary (transcoder setting).
class SyntheticGenerator {
 public:
  // stream_seed defaults to dict.seed + 1; pass a different one to draw a
  // held-out stream from the same dictionary.
  explicit SyntheticGenerator(SyntheticDictionary dict,
                              std::optional<Mat<float>> out_dict = std::nullopt,
                              std::optional<std::uint64_t> stream_seed = std::nullopt);

  // Appends nothing; replaces `out`. When `codes` is non-null it receives
  // one sparse row (dictionary indices, magnitudes) per generated row.
  void sample(std::size_t n, ActivationBatch& out, SparseRows<float>* codes = nullptr);

  const SyntheticDictionary& dictionary() const { return dict_; }
  bool has_targets() const { return out_dict_.has_value(); }

 private:
  SyntheticDictionary dict_;
  std::optional<Mat<float>> out_dict_;
  std::mt19937_64 rng_;
};

// ActivationSource adapter over the generator; infinite stream.
class SyntheticSource : public ActivationSource {
 public:
  explicit SyntheticSource(SyntheticDictionary dict,
                           std::optional<Mat<float>> out_dict = std::nullopt,
                           std::string label = "SYN",
                           std::optional<std::uint64_t> stream_seed = std::nullopt);
  int d_model() const override { return gen_.dictionary().d(); }
  bool has_targets() const override;
  std::size_t next(std::size_t n, ActivationBatch& out) override;
  std::string label() const override { return label_; }
  SyntheticGenerator& generator() { return gen_; }

 private:
  SyntheticGenerator gen_;
  std::string label_;
};

// Caps another source at a fixed number of rows (held-out splits, etc.).
class LimitedSource : public ActivationSource {
 public:
  LimitedSource(ActivationSource& inner, std::size_t limit)
      : inner_(inner), remaining_(limit) {}
  int d_model() const override { return inner_.d_model(); }
  bool has_targets() const override { return inner_.has_targets(); }
  std::string label() const override { return inner_.label(); }
  std::size_t next(std::size_t n, ActivationBatch& out) override;

 private:
  ActivationSource& inner_;
  std::size_t remaining_;
};

}  // namespace sae
