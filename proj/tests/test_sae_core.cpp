// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "sae/ref.hpp"
#include "sae/sae_core.hpp"
#include "testutil.hpp"

using namespace sae;
using testutil::close_rel;

namespace {

SaeConfig topk_config(int d, int f, int k) {
  SaeConfig cfg;
  cfg.d_model = d;
  cfg.n_features = f;
  cfg.k = k;
  cfg.variant = Variant::TopK;
  return cfg;
}

}  // namespace

TEST_CASE("preactivate applies ReLU") {
  SaeParams<float> p;
  p.w_enc = Mat<float>(2, 2);
  p.w_enc(0, 0) = 1;
  p.w_enc(1, 1) = 1;
  p.b_enc = {0, 0};
  p.w_dec = Mat<float>(2, 2);
  p.b_dec = {0, 0};

  const auto out = preactivate(p, std::vector<float>{3.0f, -1.0f});
  CHECK(out[0] == 3.0f);
  CHECK(out[1] == 0.0f);

  const auto zero = preactivate(p, std::vector<float>{0.0f, 0.0f});
  CHECK(zero[0] == 0.0f);
  CHECK(zero[1] == 0.0f);
}

TEST_CASE("preactivate matches the scalar-loop reference") {
  std::mt19937_64 rng(1);
  const SaeConfig cfg = topk_config(8, 16, 3);
  const auto p = testutil::random_params<float>(cfg, rng);
  const auto x = testutil::random_vec<float>(8, rng);
  const auto fast = preactivate(p, x);
  const auto slow = ref::preactivate(p, x);
  for (std::size_t i = 0; i < fast.size(); ++i)
    CHECK(close_rel(fast[i], slow[i], 1e-6));
}

TEST_CASE("preactivate rejects dimension mismatch") {
  std::mt19937_64 rng(2);
  const SaeConfig cfg = topk_config(8, 16, 3);
  const auto p = testutil::random_params<float>(cfg, rng);
  CHECK_THROWS_AS(preactivate(p, std::vector<float>(5)), ContractError);
}

TEST_CASE("norm_weighted_topk picks the k largest weighted scores") {
  const std::vector<float> preact{1, 2, 3};
  CHECK(norm_weighted_topk(preact, {1, 1, 1}, 1) ==
        std::vector<std::uint8_t>{0, 0, 1});
  // weighted scores (10, 2, 3): the norm flips the winner
  CHECK(norm_weighted_topk(preact, {10, 1, 1}, 1) ==
        std::vector<std::uint8_t>{1, 0, 0});
  // tie breaks toward the lower index
  CHECK(norm_weighted_topk<float>({2, 2}, {1, 1}, 1) ==
        std::vector<std::uint8_t>{1, 0});
  CHECK_THROWS_AS(norm_weighted_topk(preact, {1, 1, 1}, 4), ContractError);
}

TEST_CASE("norm_weighted_topk matches full-sort reference on random input") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int f = 16;
    const int k = 1 + int(rng() % 8);
    auto preact = testutil::random_vec<float>(f, rng);
    for (auto& v : preact) v = v > 0 ? v : 0;
    auto norms = testutil::random_vec<float>(f, rng);
    for (auto& v : norms) v = std::abs(v);
    CHECK(norm_weighted_topk(preact, norms, k) ==
          ref::topk_mask_fullsort(preact, norms, k));
  }
}

TEST_CASE("norm_weighted_topk is invariant under joint norm rescaling") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto preact = testutil::random_vec<float>(32, rng);
    for (auto& v : preact) v = std::abs(v);
    auto norms = testutil::random_vec<float>(32, rng);
    for (auto& v : norms) v = std::abs(v);
    const auto base = norm_weighted_topk(preact, norms, 7);
    for (const float c : {0.25f, 4.0f}) {
      auto scaled = norms;
      for (auto& v : scaled) v *= c;
      CHECK(norm_weighted_topk(preact, scaled, 7) == base);
    }
  }
}

TEST_CASE("encode TopK with K=F equals Vanilla support and values") {
  std::mt19937_64 rng(5);
  SaeConfig topk = topk_config(8, 16, 16);
  SaeConfig vanilla = topk;
  vanilla.variant = Variant::Vanilla;
  const auto p = testutil::random_params<float>(topk, rng);
  const auto x = testutil::random_vec<float>(8, rng);
  const auto a = encode(topk, p, x);
  const auto b = encode(vanilla, p, x);
  CHECK(a.idx == b.idx);
  CHECK(a.val == b.val);
}

TEST_CASE("encode TopK matches brute-force weighted sort oracle") {
  std::mt19937_64 rng(6);
  const SaeConfig cfg = topk_config(8, 16, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testutil::random_params<float>(cfg, rng);
    const auto x = testutil::random_vec<float>(8, rng);
    const auto fast = encode(cfg, p, x);
    const auto slow = ref::encode(cfg, p, x);
    REQUIRE(fast.idx == slow.idx);
    for (std::size_t i = 0; i < fast.val.size(); ++i)
      CHECK(close_rel(fast.val[i], slow.val[i], 1e-6));
    CHECK(fast.nnz() <= 2);
    for (const float v : fast.val) CHECK(v > 0.0f);
  }
}

TEST_CASE("encode TopK yields exactly K nonzeros when K positives exist") {
  std::mt19937_64 rng(7);
  const SaeConfig cfg = topk_config(16, 64, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testutil::random_params<float>(cfg, rng);
    const auto x = testutil::random_vec<float>(16, rng);
    const auto pre = preactivate(p, x);
    std::size_t positives = 0;
    for (const float v : pre) positives += v > 0 ? 1 : 0;
    const auto f = encode(cfg, p, x);
    CHECK(f.nnz() == std::min<std::size_t>(positives, 6));
  }
}

TEST_CASE("encode JumpReLU with theta=0 matches Vanilla support") {
  std::mt19937_64 rng(8);
  SaeConfig jump = topk_config(8, 16, 4);
  jump.variant = Variant::JumpRelu;
  SaeConfig vanilla = jump;
  vanilla.variant = Variant::Vanilla;
  auto p = testutil::random_params<float>(jump, rng);
  p.theta = 0.0f;
  const auto x = testutil::random_vec<float>(8, rng);
  CHECK(encode(jump, p, x).idx == encode(vanilla, p, x).idx);
}

TEST_CASE("encode JumpReLU without theta is a configuration error") {
  std::mt19937_64 rng(9);
  SaeConfig jump = topk_config(8, 16, 4);
  jump.variant = Variant::JumpRelu;
  const auto p = testutil::random_params<float>(jump, rng);
  CHECK_THROWS_AS(encode(jump, p, testutil::random_vec<float>(8, rng)),
                  ContractError);
}

TEST_CASE("decode of an empty feature vector is the bias") {
  std::mt19937_64 rng(10);
  const SaeConfig cfg = topk_config(8, 16, 2);
  const auto p = testutil::random_params<float>(cfg, rng);
  const auto out = decode(p, FeatureVec<float>{});
  for (std::size_t d = 0; d < 8; ++d) CHECK(out[d] == p.b_dec[d]);
}

TEST_CASE("decode of a single feature is v * column + bias") {
  std::mt19937_64 rng(11);
  const SaeConfig cfg = topk_config(8, 16, 2);
  const auto p = testutil::random_params<float>(cfg, rng);
  FeatureVec<float> f;
  f.idx = {5};
  f.val = {2.5f};
  const auto out = decode(p, f);
  for (std::size_t d = 0; d < 8; ++d)
    CHECK(close_rel(out[d], 2.5f * p.dec_col(5)[d] + p.b_dec[d], 1e-6f));
}

TEST_CASE("sparse decode equals dense reference") {
  std::mt19937_64 rng(12);
  const SaeConfig cfg = topk_config(8, 16, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = testutil::random_params<float>(cfg, rng);
    const auto x = testutil::random_vec<float>(8, rng);
    const auto f = encode(cfg, p, x);
    const auto sparse = decode(p, f);
    const auto dense = ref::decode_dense(p, f);
    for (std::size_t d = 0; d < 8; ++d) CHECK(close_rel(sparse[d], dense[d], 1e-6));
  }
}

TEST_CASE("decode rejects out-of-range feature indices") {
  std::mt19937_64 rng(13);
  const SaeConfig cfg = topk_config(8, 16, 2);
  const auto p = testutil::random_params<float>(cfg, rng);
  FeatureVec<float> f;
  f.idx = {16};
  f.val = {1.0f};
  CHECK_THROWS_AS(decode(p, f), ContractError);
}

TEST_CASE("forward with zero encoder reconstructs the decoder bias") {
  SaeConfig cfg = topk_config(4, 8, 2);
  SaeParams<float> p;
  p.w_enc = Mat<float>(8, 4);
  p.b_enc.assign(8, 0.0f);
  p.w_dec = Mat<float>(8, 4);
  p.b_dec = {0.5f, -1.0f, 2.0f, 0.0f};
  const std::vector<float> x(p.b_dec.begin(), p.b_dec.end());
  const auto [f, xhat] = forward(cfg, p, x);
  CHECK(f.nnz() == 0);
  for (std::size_t d = 0; d < 4; ++d) CHECK(xhat[d] == p.b_dec[d]);
}

TEST_CASE("forward equals the composition of encode and decode oracles") {
  std::mt19937_64 rng(14);
  SaeConfig cfg = topk_config(8, 16, 3);
  const auto p = init_params<float>(cfg, 99);
  const auto x = testutil::random_vec<float>(8, rng);
  const auto [f, xhat] = forward(cfg, p, x);
  const auto f_ref = ref::encode(cfg, p, x);
  REQUIRE(f.idx == f_ref.idx);
  const auto xhat_ref = ref::decode_dense(p, f_ref);
  for (std::size_t d = 0; d < 8; ++d) CHECK(close_rel(xhat[d], xhat_ref[d], 1e-5));
}

TEST_CASE("batched forward equals the single-vector path per row") {
  std::mt19937_64 rng(15);
  const SaeConfig cfg = topk_config(8, 16, 3);
  const auto p = testutil::random_params<float>(cfg, rng);
  const auto batch = testutil::random_batch<float>(32, 8, rng);
  SparseRows<float> codes;
  Mat<float> xhat;
  forward_batch(cfg, p, batch.x_in, codes, xhat);
  for (std::size_t n = 0; n < 32; ++n) {
    std::vector<float> x(batch.x_in.row(n), batch.x_in.row(n) + 8);
    const auto [f, xh] = forward(cfg, p, x);
    REQUIRE(codes.row_nnz(n) == f.nnz());
    for (std::size_t q = 0; q < f.nnz(); ++q) {
      CHECK(codes.idx[codes.off[n] + q] == f.idx[q]);
      CHECK(codes.val[codes.off[n] + q] == f.val[q]);
    }
    for (std::size_t d = 0; d < 8; ++d) CHECK(xhat(n, d) == xh[d]);
  }
}

TEST_CASE("single-feature homogeneity: scale column by c, activation by 1/c") {
  std::mt19937_64 rng(16);
  const SaeConfig cfg = topk_config(8, 16, 1);
  auto p = testutil::random_params<float>(cfg, rng);
  p.b_dec.assign(8, 0.0f);
  FeatureVec<float> f;
  f.idx = {3};
  f.val = {1.75f};
  const auto base = decode(p, f);
  const float c = 4.0f;
  for (std::size_t d = 0; d < 8; ++d) p.dec_col(3)[d] *= c;
  f.val[0] /= c;
  const auto scaled = decode(p, f);
  for (std::size_t d = 0; d < 8; ++d) CHECK(close_rel(base[d], scaled[d], 1e-6));
}
