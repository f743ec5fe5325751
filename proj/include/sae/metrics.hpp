// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include "sae/activations.hpp"
#include "sae/normalize.hpp"
#include "sae/sae_core.hpp"

namespace sae {

// Runs the SAE as a map on raw inputs. Unfolded params operate in
// normalized space, so inputs are scaled by s_in on the way in and
// reconstructions by 1/s_out on the way out; folded params run directly.
// Either way the composite map (and the TopK mask) is the same.
void forward_raw(const SaeConfig& config, const SaeParams<float>& params,
                 const NormFactors& norm, bool norm_folded, const Mat<float>& x_raw,
                 SparseRows<float>& codes, Mat<float>& xhat_raw);

struct EvalReport {
  double l0_mean = 0;
  double explained_variance = 0;  // <= 1, uncentered
  double mse = 0;                 // per-element mean over valid rows
  std::optional<double> delta_downstream_loss;
  std::int64_t n_tokens = 0;
  std::int64_t zero_norm_rows_skipped = 0;  // excluded from EV only
};

// Uncentered explained variance pooled over the batch:
// 1 - sum ||x - xhat||^2 / sum ||x||^2. Zero-norm rows are excluded from
// both sums and counted via `skipped`.
double explained_variance(const Mat<float>& x, const Mat<float>& xhat,
                          std::int64_t* skipped = nullptr);

double l0_mean(const SparseRows<float>& codes);

// Loss functional over activation batches. Labels are assigned once from
// the original vectors so original and reconstruction are scored against
// the same task.
class DownstreamEvaluator {
 public:
  virtual ~DownstreamEvaluator() = default;
  virtual std::vector<int> assign_labels(const Mat<float>& original) const = 0;
  virtual double loss(const Mat<float>& x, const std::vector<int>& labels) const = 0;
};

// Fixed linear-softmax readout over synthetic classes: labels come from the
// argmax of the readout on the original vector, the loss is mean
// cross-entropy. Deterministic given the seed.
class ToyReadout : public DownstreamEvaluator {
 public:
  ToyReadout(int n_classes, int d_model, std::uint64_t seed);
  std::vector<int> assign_labels(const Mat<float>& original) const override;
  double loss(const Mat<float>& x, const std::vector<int>& labels) const override;

 private:
  Mat<float> w_;  // C x D
};

using ReconFn = std::function<void(const Mat<float>& x, Mat<float>& xhat)>;

// evaluator(reconstructed) - evaluator(original) over the same tokens.
double delta_downstream_loss(const DownstreamEvaluator& evaluator, const ReconFn& recon,
                             ActivationSource& source, std::int64_t n_tokens);
double delta_downstream_loss(const DownstreamEvaluator& evaluator,
                             const SaeConfig& config, const SaeParams<float>& params,
                             const NormFactors& norm, bool norm_folded,
                             ActivationSource& source, std::int64_t n_tokens);

// Per-feature fire counts over a token window, with the health thresholds:
// WARN when more than 10% of features never fire in the window or more
// than 2% fire with frequency above 0.1.
struct FiringStats {
  std::vector<std::int64_t> counts;
  std::int64_t window_tokens = 0;

  static constexpr int kHistBins = 24;
  static constexpr double kHistLo = -6.0;  // log10 frequency of leftmost bin

  std::int64_t inactive_count() const;
  double inactive_fraction() const;
  double ultra_active_fraction() const;  // frequency strictly above 0.1
  bool warn_inactive() const { return inactive_fraction() > 0.10; }
  bool warn_ultra_active() const { return ultra_active_fraction() > 0.02; }
  std::vector<std::int64_t> log_histogram() const;  // firing features only
};

FiringStats firing_stats(const SaeConfig& config, const SaeParams<float>& params,
                         const NormFactors& norm, bool norm_folded,
                         ActivationSource& source, std::int64_t window_tokens);

EvalReport evaluate(const SaeConfig& config, const SaeParams<float>& params,
                    const NormFactors& norm, bool norm_folded,
                    ActivationSource& source, std::int64_t n_tokens,
                    const DownstreamEvaluator* evaluator = nullptr);

// One metric per line: name <TAB> value <TAB> n_tokens <TAB> source label.
void write_report_records(std::ostream& os, const EvalReport& report,
                          const std::string& source_label);
void write_firing_records(std::ostream& os, const FiringStats& stats,
                          const std::string& source_label);

}  // namespace sae
