// SPDX-License-Identifier: Apache-2.0
#include "sae/buffer.hpp"

#include <algorithm>

namespace sae {

ShuffledSource::ShuffledSource(ActivationSource& producer, std::size_t capacity,
                               std::uint64_t seed)
    : producer_(producer), capacity_(capacity), rng_(seed) {
  if (capacity_ < 2) throw ContractError("buffer capacity must be >= 2");
  const std::size_t d = std::size_t(producer_.d_model());
  storage_in_ = Mat<float>(capacity_, d);
  if (producer_.has_targets()) storage_out_ = Mat<float>(capacity_, d);
  valid_.assign(capacity_, 1);
}

void ShuffledSource::refill() {
  const std::size_t d = storage_in_.cols;
  while (fill_ < capacity_) {
    const std::size_t got = producer_.next(capacity_ - fill_, scratch_);
    if (got == 0) {
      draining_ = true;
      break;
    }
    for (std::size_t r = 0; r < got; ++r) {
      std::copy_n(scratch_.x_in.row(r), d, storage_in_.row(fill_));
      if (!storage_out_.empty() && scratch_.x_out)
        std::copy_n(scratch_.x_out->row(r), d, storage_out_.row(fill_));
      valid_[fill_] = scratch_.valid[r];
      ++fill_;
    }
  }
  ++refills_;
  // Fisher-Yates over the whole filled region, not just the new half.
  for (std::size_t i = fill_; i > 1; --i) {
    const std::size_t j =
        std::uniform_int_distribution<std::size_t>(0, i - 1)(rng_);
    if (j == i - 1) continue;
    std::swap_ranges(storage_in_.row(i - 1), storage_in_.row(i - 1) + d,
                     storage_in_.row(j));
    if (!storage_out_.empty())
      std::swap_ranges(storage_out_.row(i - 1), storage_out_.row(i - 1) + d,
                       storage_out_.row(j));
    std::swap(valid_[i - 1], valid_[j]);
  }
}

std::size_t ShuffledSource::next(std::size_t n, ActivationBatch& out) {
  const std::size_t d = storage_in_.cols;
  if (!draining_ && fill_ <= refill_threshold()) refill();
  if (fill_ == 0) {
    out.resize(0, d, !storage_out_.empty());
    return 0;  // drained empty: end of data
  }
  const std::size_t take = std::min(n, fill_);
  out.resize(take, d, !storage_out_.empty());
  for (std::size_t r = 0; r < take; ++r) {
    const std::size_t src = fill_ - take + r;  // consume from the tail
    std::copy_n(storage_in_.row(src), d, out.x_in.row(r));
    if (!storage_out_.empty())
      std::copy_n(storage_out_.row(src), d, out.x_out->row(r));
    out.valid[r] = valid_[src];
  }
  fill_ -= take;
  return take;
}

}  // namespace sae
