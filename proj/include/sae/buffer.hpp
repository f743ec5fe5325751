// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "sae/activations.hpp"

namespace sae {

// Producer-consumer shuffle buffer. The phases are serialized: sampling
// draws from the filled region until half the buffer is consumed, then the
// producer tops it back up to capacity and the entire filled region is
// Fisher-Yates shuffled with the buffer's own rng. When the producer runs
// dry the buffer drains; sampling past the end reports end-of-data.
class ShuffledSource : public ActivationSource {
 public:
  ShuffledSource(ActivationSource& producer, std::size_t capacity,
                 std::uint64_t seed);

  int d_model() const override { return producer_.d_model(); }
  bool has_targets() const override { return producer_.has_targets(); }
  std::string label() const override { return producer_.label(); }
  std::size_t next(std::size_t n, ActivationBatch& out) override;

  std::size_t capacity() const { return capacity_; }
  std::size_t refill_threshold() const { return capacity_ / 2; }
  std::size_t fill_level() const { return fill_; }
  bool draining() const { return draining_; }
  std::size_t refill_count() const { return refills_; }

 private:
  void refill();

  ActivationSource& producer_;
  std::size_t capacity_;
  std::mt19937_64 rng_;

  // Filled region is rows [0, fill_); sampling consumes from the tail.
  Mat<float> storage_in_;
  Mat<float> storage_out_;
  std::vector<std::uint8_t> valid_;
  std::size_t fill_ = 0;
  bool draining_ = false;
  std::size_t refills_ = 0;
  ActivationBatch scratch_;
};

}  // namespace sae
