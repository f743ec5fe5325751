// SPDX-License-Identifier: Apache-2.0
#include "sae/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace sae {

void forward_raw(const SaeConfig& config, const SaeParams<float>& params,
                 const NormFactors& norm, bool norm_folded, const Mat<float>& x_raw,
                 SparseRows<float>& codes, Mat<float>& xhat_raw) {
  if (norm_folded || (norm.s_in == 1.0f && norm.s_out == 1.0f)) {
    forward_batch(config, params, x_raw, codes, xhat_raw);
    return;
  }
  Mat<float> scaled = x_raw;
  scale(norm.s_in, scaled.data.data(), scaled.size());
  forward_batch(config, params, scaled, codes, xhat_raw);
  scale(1.0f / norm.s_out, xhat_raw.data.data(), xhat_raw.size());
}

double explained_variance(const Mat<float>& x, const Mat<float>& xhat,
                          std::int64_t* skipped) {
  if (x.rows != xhat.rows || x.cols != xhat.cols || x.rows == 0)
    throw ContractError("explained_variance: shape mismatch or empty input");
  double num = 0, den = 0;
  std::int64_t skip = 0;
  for (std::size_t n = 0; n < x.rows; ++n) {
    const double xx = nrm2sq(x.row(n), x.cols);
    if (xx == 0.0) {
      ++skip;
      continue;
    }
    double rr = 0;
    const float* a = x.row(n);
    const float* b = xhat.row(n);
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double r = double(a[j]) - double(b[j]);
      rr += r * r;
    }
    num += rr;
    den += xx;
  }
  if (skipped) *skipped = skip;
  if (den == 0.0) throw ContractError("explained_variance: all rows have zero norm");
  return 1.0 - num / den;
}

double l0_mean(const SparseRows<float>& codes) {
  if (codes.n_rows() == 0) throw ContractError("l0_mean: no rows");
  return double(codes.nnz()) / double(codes.n_rows());
}

ToyReadout::ToyReadout(int n_classes, int d_model, std::uint64_t seed) {
  if (n_classes < 2) throw ContractError("ToyReadout: need >= 2 classes");
  w_ = Mat<float>(std::size_t(n_classes), std::size_t(d_model));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : w_.data) v = float(gauss(rng) / std::sqrt(double(d_model)));
}

std::vector<int> ToyReadout::assign_labels(const Mat<float>& original) const {
  const std::size_t C = w_.rows;
  std::vector<int> labels(original.rows);
  for (std::size_t n = 0; n < original.rows; ++n) {
    int best = 0;
    float best_v = dot(w_.row(0), original.row(n), w_.cols);
    for (std::size_t c = 1; c < C; ++c) {
      const float v = dot(w_.row(c), original.row(n), w_.cols);
      if (v > best_v) {
        best_v = v;
        best = int(c);
      }
    }
    labels[n] = best;
  }
  return labels;
}

double ToyReadout::loss(const Mat<float>& x, const std::vector<int>& labels) const {
  if (labels.size() != x.rows) throw ContractError("ToyReadout: label count mismatch");
  const std::size_t C = w_.rows;
  double total = 0;
  std::vector<double> logits(C);
  for (std::size_t n = 0; n < x.rows; ++n) {
    double mx = -1e300;
    for (std::size_t c = 0; c < C; ++c) {
      logits[c] = double(dot(w_.row(c), x.row(n), w_.cols));
      mx = std::max(mx, logits[c]);
    }
    double lse = 0;
    for (std::size_t c = 0; c < C; ++c) lse += std::exp(logits[c] - mx);
    total += (mx + std::log(lse)) - logits[std::size_t(labels[n])];
  }
  return total / double(x.rows);
}

namespace {

// Pulls up to n_tokens valid rows through `fn(batch)`.
template <typename Fn>
std::int64_t stream_valid(ActivationSource& source, std::int64_t n_tokens, Fn&& fn) {
  std::int64_t seen = 0;
  ActivationBatch batch;
  while (seen < n_tokens) {
    const std::size_t got = source.next(
        std::size_t(std::min<std::int64_t>(n_tokens - seen, 4096)), batch);
    if (got == 0) break;
    // Compact to valid rows.
    std::size_t keep = 0;
    for (std::size_t r = 0; r < got; ++r) keep += batch.valid[r] ? 1 : 0;
    if (keep != got) {
      std::size_t w = 0;
      for (std::size_t r = 0; r < got; ++r) {
        if (!batch.valid[r]) continue;
        if (w != r) {
          std::copy_n(batch.x_in.row(r), batch.x_in.cols, batch.x_in.row(w));
          if (batch.x_out)
            std::copy_n(batch.x_out->row(r), batch.x_out->cols, batch.x_out->row(w));
        }
        ++w;
      }
      batch.x_in.rows = keep;
      batch.x_in.data.resize(keep * batch.x_in.cols);
      if (batch.x_out) {
        batch.x_out->rows = keep;
        batch.x_out->data.resize(keep * batch.x_out->cols);
      }
      batch.valid.assign(keep, 1);
    }
    if (keep == 0) continue;
    const std::size_t take = std::min<std::size_t>(keep, std::size_t(n_tokens - seen));
    if (take != keep) {
      batch.x_in.rows = take;
      batch.x_in.data.resize(take * batch.x_in.cols);
      if (batch.x_out) {
        batch.x_out->rows = take;
        batch.x_out->data.resize(take * batch.x_out->cols);
      }
      batch.valid.resize(take);
    }
    fn(batch);
    seen += std::int64_t(take);
  }
  return seen;
}

}  // namespace

double delta_downstream_loss(const DownstreamEvaluator& evaluator, const ReconFn& recon,
                             ActivationSource& source, std::int64_t n_tokens) {
  double orig_sum = 0, rec_sum = 0;
  std::int64_t rows = 0;
  stream_valid(source, n_tokens, [&](const ActivationBatch& b) {
    const std::vector<int> labels = evaluator.assign_labels(b.x_in);
    Mat<float> xhat;
    recon(b.x_in, xhat);
    const double n = double(b.x_in.rows);
    orig_sum += evaluator.loss(b.x_in, labels) * n;
    rec_sum += evaluator.loss(xhat, labels) * n;
    rows += std::int64_t(b.x_in.rows);
  });
  if (rows == 0) throw ContractError("delta_downstream_loss: no valid tokens");
  return rec_sum / double(rows) - orig_sum / double(rows);
}

double delta_downstream_loss(const DownstreamEvaluator& evaluator,
                             const SaeConfig& config, const SaeParams<float>& params,
                             const NormFactors& norm, bool norm_folded,
                             ActivationSource& source, std::int64_t n_tokens) {
  return delta_downstream_loss(
      evaluator,
      [&](const Mat<float>& x, Mat<float>& xhat) {
        SparseRows<float> codes;
        forward_raw(config, params, norm, norm_folded, x, codes, xhat);
      },
      source, n_tokens);
}

std::int64_t FiringStats::inactive_count() const {
  std::int64_t n = 0;
  for (auto c : counts) n += c == 0 ? 1 : 0;
  return n;
}

double FiringStats::inactive_fraction() const {
  return counts.empty() ? 0.0 : double(inactive_count()) / double(counts.size());
}

double FiringStats::ultra_active_fraction() const {
  if (counts.empty() || window_tokens == 0) return 0.0;
  std::int64_t n = 0;
  for (auto c : counts)
    if (double(c) / double(window_tokens) > 0.1) ++n;
  return double(n) / double(counts.size());
}

std::vector<std::int64_t> FiringStats::log_histogram() const {
  std::vector<std::int64_t> bins(kHistBins, 0);
  for (auto c : counts) {
    if (c == 0) continue;
    const double lf = std::log10(double(c) / double(window_tokens));
    int b = int(std::floor((lf - kHistLo) / (0.0 - kHistLo) * kHistBins));
    b = std::clamp(b, 0, kHistBins - 1);
    ++bins[std::size_t(b)];
  }
  return bins;
}

FiringStats firing_stats(const SaeConfig& config, const SaeParams<float>& params,
                         const NormFactors& norm, bool norm_folded,
                         ActivationSource& source, std::int64_t window_tokens) {
  params.check_dims(config);
  FiringStats stats;
  stats.counts.assign(std::size_t(config.n_features), 0);
  SparseRows<float> codes;
  Mat<float> xhat;
  const std::int64_t seen =
      stream_valid(source, window_tokens, [&](const ActivationBatch& b) {
        forward_raw(config, params, norm, norm_folded, b.x_in, codes, xhat);
        for (auto i : codes.idx) ++stats.counts[i];
      });
  if (seen == 0) throw ContractError("firing_stats: no valid tokens");
  stats.window_tokens = seen;
  return stats;
}

EvalReport evaluate(const SaeConfig& config, const SaeParams<float>& params,
                    const NormFactors& norm, bool norm_folded,
                    ActivationSource& source, std::int64_t n_tokens,
                    const DownstreamEvaluator* evaluator) {
  params.check_dims(config);
  EvalReport report;
  double sq_resid = 0, sq_resid_ev = 0, sq_x = 0;
  std::int64_t nnz = 0, rows = 0, skipped = 0;
  double orig_sum = 0, rec_sum = 0;

  SparseRows<float> codes;
  Mat<float> xhat;
  stream_valid(source, n_tokens, [&](const ActivationBatch& b) {
    forward_raw(config, params, norm, norm_folded, b.x_in, codes, xhat);
    const Mat<float>& target = b.targets();
    for (std::size_t n = 0; n < target.rows; ++n) {
      const double xx = nrm2sq(target.row(n), target.cols);
      double rr = 0;
      const float* t = target.row(n);
      const float* h = xhat.row(n);
      for (std::size_t j = 0; j < target.cols; ++j) {
        const double r = double(t[j]) - double(h[j]);
        rr += r * r;
      }
      sq_resid += rr;
      if (xx == 0.0) {
        ++skipped;
      } else {
        sq_resid_ev += rr;
        sq_x += xx;
      }
    }
    nnz += std::int64_t(codes.nnz());
    rows += std::int64_t(target.rows);
    if (evaluator) {
      const std::vector<int> labels = evaluator->assign_labels(b.x_in);
      orig_sum += evaluator->loss(b.targets(), labels) * double(target.rows);
      rec_sum += evaluator->loss(xhat, labels) * double(target.rows);
    }
  });
  if (rows == 0) throw ContractError("evaluate: no valid tokens");

  report.n_tokens = rows;
  report.l0_mean = double(nnz) / double(rows);
  report.mse = sq_resid / (double(rows) * double(params.w_dec.cols));
  report.zero_norm_rows_skipped = skipped;
  if (sq_x == 0.0) throw ContractError("evaluate: all target rows have zero norm");
  report.explained_variance = 1.0 - sq_resid_ev / sq_x;
  if (evaluator)
    report.delta_downstream_loss = (rec_sum - orig_sum) / double(rows);
  return report;
}

void write_report_records(std::ostream& os, const EvalReport& report,
                          const std::string& source_label) {
  const auto line = [&](const std::string& name, double value) {
    os << name << '\t' << value << '\t' << report.n_tokens << '\t'
       << source_label << '\n';
  };
  line("l0_mean", report.l0_mean);
  line("explained_variance", report.explained_variance);
  line("mse", report.mse);
  if (report.delta_downstream_loss)
    line("delta_downstream_loss", *report.delta_downstream_loss);
  line("zero_norm_rows_skipped", double(report.zero_norm_rows_skipped));
}

void write_firing_records(std::ostream& os, const FiringStats& stats,
                          const std::string& source_label) {
  const auto line = [&](const std::string& name, double value) {
    os << name << '\t' << value << '\t' << stats.window_tokens << '\t'
       << source_label << '\n';
  };
  line("inactive_fraction", stats.inactive_fraction());
  line("ultra_active_fraction", stats.ultra_active_fraction());
  line("warn_inactive", stats.warn_inactive() ? 1 : 0);
  line("warn_ultra_active", stats.warn_ultra_active() ? 1 : 0);
  const auto hist = stats.log_histogram();
  for (int b = 0; b < FiringStats::kHistBins; ++b) {
    const double lo =
        FiringStats::kHistLo * (1.0 - double(b) / FiringStats::kHistBins);
    os << "freq_hist_log10_" << lo << '\t' << double(hist[std::size_t(b)]) << '\t'
       << stats.window_tokens << '\t' << source_label << '\n';
  }
}

}  // namespace sae
