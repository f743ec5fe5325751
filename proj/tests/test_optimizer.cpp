// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <random>

#include "sae/adam.hpp"
#include "sae/gradients.hpp"
#include "sae/losses.hpp"
#include "sae/ref.hpp"
#include "sae/schedule.hpp"
#include "sae/train.hpp"
#include "testutil.hpp"

using namespace sae;
using testutil::close_rel;

namespace {

SaeConfig make_config(int d, int f, int k, Variant variant = Variant::TopK,
                      float l1 = 0.0f) {
  SaeConfig cfg;
  cfg.d_model = d;
  cfg.n_features = f;
  cfg.k = k;
  cfg.variant = variant;
  cfg.l1_coeff = l1;
  return cfg;
}

}  // namespace

TEST_CASE("init: decoder column norms are sqrt(2/expansion)") {
  for (const auto& [d, f, want] :
       std::vector<std::tuple<int, int, double>>{{16, 128, 0.5}, {8, 256, 0.25}}) {
    const auto cfg = make_config(d, f, 1);
    const auto p = init_params<float>(cfg, 1234);
    for (int i = 0; i < f; ++i) {
      const double norm = nrm2(p.dec_col(std::size_t(i)), std::size_t(d));
      CHECK(std::abs(norm - want) < 1e-6);
    }
  }
}

TEST_CASE("init: tied encoder gives preactivations equal to dec^T x") {
  const auto cfg = make_config(8, 32, 4);
  const auto p = init_params<float>(cfg, 5);
  std::mt19937_64 rng(6);
  const auto x = testutil::random_vec<float>(8, rng);
  const auto pre = preactivate(p, x);
  for (int i = 0; i < 32; ++i) {
    const float want = dot(p.dec_col(std::size_t(i)), x.data(), std::size_t(8));
    CHECK(close_rel(pre[std::size_t(i)], want > 0 ? want : 0.0f, 1e-6));
  }
}

TEST_CASE("init: transcoder encoder is untied, biases zero, deterministic") {
  auto cfg = make_config(8, 32, 4);
  cfg.position_kind = PositionKind::Transcoder;
  const auto a = init_params<float>(cfg, 7);
  const auto b = init_params<float>(cfg, 7);
  CHECK(a.w_enc.data == b.w_enc.data);
  CHECK(a.w_dec.data == b.w_dec.data);
  CHECK(a.w_enc.data != a.w_dec.data);
  for (const float v : a.b_enc) CHECK(v == 0.0f);
  for (const float v : a.b_dec) CHECK(v == 0.0f);
  const auto c = init_params<float>(cfg, 8);
  CHECK(a.w_dec.data != c.w_dec.data);
}

TEST_CASE("mse_loss basics and loop oracle") {
  Mat<float> target(1, 2), xhat(1, 2);
  target(0, 0) = 1;
  target(0, 1) = 1;
  CHECK(mse_loss(target, target) == 0.0);
  CHECK(mse_loss(target, xhat) == doctest::Approx(1.0));

  std::mt19937_64 rng(9);
  const auto a = testutil::random_mat<float>(7, 13, rng);
  const auto b = testutil::random_mat<float>(7, 13, rng);
  CHECK(close_rel(mse_loss(a, b), ref::mse_batch(a, b), 1e-9));
}

TEST_CASE("vanilla_loss: lambda=0 equals MSE, zero encoder kills the L1 term") {
  std::mt19937_64 rng(10);
  auto cfg = make_config(6, 12, 12, Variant::Vanilla, 0.0f);
  auto p = testutil::random_params<float>(cfg, rng);
  auto batch = testutil::random_batch<float>(4, 6, rng);

  SparseRows<float> codes;
  Mat<float> xhat;
  forward_batch(cfg, p, batch.x_in, codes, xhat);
  CHECK(close_rel(vanilla_loss(cfg, p, batch), mse_loss(batch.x_in, xhat), 1e-9));

  cfg.l1_coeff = 0.5f;
  p.w_enc.set_zero();
  p.b_enc.assign(12, 0.0f);
  Mat<float> bias_only(4, 6);
  for (std::size_t n = 0; n < 4; ++n)
    std::copy(p.b_dec.begin(), p.b_dec.end(), bias_only.row(n));
  CHECK(close_rel(vanilla_loss(cfg, p, batch), mse_loss(batch.x_in, bias_only), 1e-9));

  auto topk_cfg = make_config(6, 12, 3, Variant::TopK);
  CHECK_THROWS_AS(vanilla_loss(topk_cfg, p, batch), ContractError);
}

TEST_CASE("vanilla_loss matches a scalar two-term oracle") {
  std::mt19937_64 rng(11);
  const auto cfg = make_config(6, 12, 12, Variant::Vanilla, 0.37f);
  const auto p = testutil::random_params<float>(cfg, rng);
  const auto batch = testutil::random_batch<float>(5, 6, rng);

  double l1 = 0;
  Mat<float> xhat(5, 6);
  for (std::size_t n = 0; n < 5; ++n) {
    std::vector<float> x(batch.x_in.row(n), batch.x_in.row(n) + 6);
    const auto f = ref::encode(cfg, p, x);
    for (const float v : f.val) l1 += v;
    const auto xh = ref::decode_dense(p, f);
    std::copy(xh.begin(), xh.end(), xhat.row(n));
  }
  const double want = ref::mse_batch(batch.x_in, xhat) + 0.37 * l1 / 5.0;
  CHECK(close_rel(vanilla_loss(cfg, p, batch), want, 1e-6));
}

TEST_CASE("gradients: masked-out features receive zero gradient") {
  std::mt19937_64 rng(12);
  const auto cfg = make_config(6, 12, 2);
  const auto p = testutil::random_params<double>(cfg, rng);
  const auto batch = testutil::random_batch<double>(4, 6, rng);
  const auto result = gradients(cfg, p, batch, 2);
  for (std::size_t i = 0; i < 12; ++i) {
    if (result.fired[i]) continue;
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(result.grads.w_enc(i, j) == 0.0);
      CHECK(result.grads.w_dec(i, j) == 0.0);
    }
    CHECK(result.grads.b_enc[i] == 0.0);
  }
}

TEST_CASE("gradients match central finite differences (TopK)") {
  std::mt19937_64 rng(13);
  for (int instance = 0; instance < 8; ++instance) {
    const int d = 4 + int(rng() % 3);
    const int f = 8 + int(rng() % 5);
    const int k = 2 + int(rng() % 2);
    const auto acc = testutil::finite_difference_sweep(make_config(d, f, k), rng);
    REQUIRE(acc.checked > 0);
    CHECK(acc.failed == 0);
    CHECK(acc.worst < 1e-4);
  }
}

TEST_CASE("gradients match central finite differences (Vanilla with L1)") {
  std::mt19937_64 rng(14);
  for (int instance = 0; instance < 4; ++instance) {
    const auto cfg = make_config(6, 12, 12, Variant::Vanilla, 0.23f);
    const auto acc = testutil::finite_difference_sweep(cfg, rng);
    REQUIRE(acc.checked > 0);
    CHECK(acc.failed == 0);
    CHECK(acc.worst < 1e-4);
  }
}

TEST_CASE("gradients for transcoders use x_in for the encoder, x_out as target") {
  std::mt19937_64 rng(15);
  auto cfg = make_config(6, 12, 3);
  cfg.position_kind = PositionKind::Transcoder;
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto p = testutil::random_params<double>(cfg, rng);
    auto batch = testutil::random_batch<double>(3, 6, rng, /*targets=*/true);
    if (!testutil::non_degenerate(cfg, p, batch, cfg.k)) continue;
    const auto result = gradients(cfg, p, batch, cfg.k);
    testutil::FdCheck acc;
    testutil::fd_check_tensor(cfg, p, batch, cfg.k, result.grads.w_enc.data.data(),
                    p.w_enc.data.data(), p.w_enc.size(), acc);
    testutil::fd_check_tensor(cfg, p, batch, cfg.k, result.grads.w_dec.data.data(),
                    p.w_dec.data.data(), p.w_dec.size(), acc);
    CHECK(acc.failed == 0);
    return;
  }
  FAIL("no non-degenerate transcoder instance found");
}

TEST_CASE("gradients are identical across thread counts") {
  std::mt19937_64 rng(16);
  const auto cfg = make_config(8, 24, 4);
  const auto p = testutil::random_params<float>(cfg, rng);
  const auto batch = testutil::random_batch<float>(16, 8, rng);
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto serial = gradients(cfg, p, batch, 4);
  omp_set_num_threads(threads);
  const auto parallel = gradients(cfg, p, batch, 4);
  CHECK(serial.grads.w_enc.data == parallel.grads.w_enc.data);
  CHECK(serial.grads.w_dec.data == parallel.grads.w_dec.data);
  CHECK(serial.grads.b_enc == parallel.grads.b_enc);
  CHECK(serial.grads.b_dec == parallel.grads.b_dec);
  CHECK(serial.loss == parallel.loss);
}

TEST_CASE("adam: zero gradient leaves params unchanged") {
  std::mt19937_64 rng(17);
  const auto cfg = make_config(6, 12, 3);
  auto p = testutil::random_params<float>(cfg, rng);
  const auto before = p;
  auto state = AdamState<float>::zeros_like(p);
  const auto zero = ParamTensors<float>::zeros_like(p);
  adam_step(state, p, zero, 1e-3f);
  CHECK(state.step_count == 1);
  CHECK(p.w_enc.data == before.w_enc.data);
  CHECK(p.w_dec.data == before.w_dec.data);
  CHECK(p.b_enc == before.b_enc);
  CHECK(p.b_dec == before.b_dec);
}

TEST_CASE("adam: first step matches the scalar closed form") {
  std::mt19937_64 rng(18);
  const auto cfg = make_config(4, 8, 2);
  auto p = testutil::random_params<float>(cfg, rng);
  const auto before = p;
  auto state = AdamState<float>::zeros_like(p);
  auto grads = ParamTensors<float>::zeros_like(p);
  std::normal_distribution<float> gauss(0.f, 1.f);
  for (auto& g : grads.w_enc.data) g = gauss(rng);
  const float lr = 3e-3f;
  adam_step(state, p, grads, lr);
  for (std::size_t t = 0; t < p.w_enc.size(); ++t) {
    const float g = grads.w_enc.data[t];
    const float want = before.w_enc.data[t] - lr * g / (std::abs(g) + 1e-8f);
    CHECK(close_rel(p.w_enc.data[t], want, 1e-5));
  }
}

TEST_CASE("adam: two identical steps match a scalar replay") {
  std::mt19937_64 rng(19);
  const auto cfg = make_config(4, 8, 2);
  auto p = testutil::random_params<float>(cfg, rng);
  auto state = AdamState<float>::zeros_like(p);
  auto grads = ParamTensors<float>::zeros_like(p);
  std::normal_distribution<float> gauss(0.f, 1.f);
  for (auto& g : grads.b_dec) g = gauss(rng);
  const float before0 = p.b_dec[0];
  const float g = grads.b_dec[0];
  const float lr = 1e-2f;
  adam_step(state, p, grads, lr);
  adam_step(state, p, grads, lr);

  const float beta1 = 0.9f, beta2 = 0.999f;
  float m = 0, v = 0, x = before0;
  for (int t = 1; t <= 2; ++t) {
    m = beta1 * m + (1.0f - beta1) * g;
    v = beta2 * v + (1.0f - beta2) * g * g;
    const float mhat = m / (1.0f - float(std::pow(double(beta1), t)));
    const float vhat = v / (1.0f - float(std::pow(double(beta2), t)));
    x -= lr * mhat / (std::sqrt(vhat) + 1e-8f);
  }
  CHECK(close_rel(p.b_dec[0], x, 1e-5));
}

TEST_CASE("lr schedule: endpoints, plateau, continuity, peak") {
  TrainSchedule s;
  s.total_steps = 1000;
  s.base_lr = 8e-4;
  s.warmup_steps = 100;
  s.decay_fraction = 0.2;
  CHECK(lr_at(0, s) == 0.0);
  CHECK(lr_at(1000, s) == 0.0);
  CHECK(lr_at(500, s) == doctest::Approx(8e-4));
  CHECK(lr_at(100, s) == doctest::Approx(8e-4));
  double prev = lr_at(0, s);
  double peak = 0;
  for (int step = 1; step <= 1000; ++step) {
    const double cur = lr_at(step, s);
    CHECK(std::abs(cur - prev) < 8e-4 / 80.0);  // piecewise-linear increments
    peak = std::max(peak, cur);
    prev = cur;
  }
  CHECK(peak == doctest::Approx(8e-4));
  CHECK_THROWS_AS(lr_at(1001, s), ContractError);
}

TEST_CASE("lr schedule: warmup default is min(10000, 10% of total)") {
  TrainSchedule s;
  s.total_steps = 2000;
  CHECK(s.resolved_warmup() == 200);
  s.total_steps = 500000;
  CHECK(s.resolved_warmup() == 10000);
}

TEST_CASE("k schedule: anneals log-linearly from D to K") {
  TrainSchedule s;
  s.total_steps = 1000;
  s.k_anneal_fraction = 0.1;
  SaeConfig cfg = make_config(4096, 8192, 50);
  CHECK(k_at(0, s, cfg) == 4096);
  CHECK(k_at(100, s, cfg) == 50);
  CHECK(k_at(999, s, cfg) == 50);
  // geometric mean of D and K at the midpoint of the window
  CHECK(k_at(50, s, cfg) == 453);
  int prev = k_at(0, s, cfg);
  for (int step = 1; step <= 1000; ++step) {
    const int cur = k_at(step, s, cfg);
    CHECK(cur <= prev);
    CHECK(cur >= 50);
    prev = cur;
  }
}

TEST_CASE("k schedule: start clamps to F when D exceeds it") {
  TrainSchedule s;
  s.total_steps = 100;
  s.k_anneal_fraction = 0.5;
  SaeConfig cfg = make_config(64, 32, 4);
  CHECK(k_at(0, s, cfg) == 32);
  CHECK(k_at(60, s, cfg) == 4);
}

TEST_CASE("vanilla decoder constraint: projection and renormalization") {
  std::mt19937_64 rng(20);
  const auto cfg = make_config(8, 16, 16, Variant::Vanilla);
  auto p = testutil::random_params<float>(cfg, rng);

  // gradient parallel to a column projects to zero
  auto grads = ParamTensors<float>::zeros_like(p);
  for (std::size_t d = 0; d < 8; ++d) grads.w_dec(0, d) = 2.0f * p.w_dec(0, d);
  // orthogonal gradient survives: build one via Gram-Schmidt
  std::vector<float> ortho = testutil::random_vec<float>(8, rng);
  const double dp = dot(ortho.data(), p.dec_col(1), std::size_t(8)) /
                    nrm2sq(p.dec_col(1), 8);
  for (std::size_t d = 0; d < 8; ++d) ortho[d] -= float(dp) * p.dec_col(1)[d];
  for (std::size_t d = 0; d < 8; ++d) grads.w_dec(1, d) = ortho[d];

  project_decoder_grads(p, grads);
  for (std::size_t d = 0; d < 8; ++d) {
    CHECK(std::abs(grads.w_dec(0, d)) < 1e-5);
    CHECK(close_rel(grads.w_dec(1, d), ortho[d], 1e-4, 1e-6));
  }

  renormalize_decoder(p);
  for (std::size_t i = 0; i < 16; ++i)
    CHECK(std::abs(nrm2(p.dec_col(i), 8) - 1.0) < 1e-6);
}

TEST_CASE("train: zero steps returns the initialization unchanged") {
  SyntheticSource source(make_dictionary(32, 16, 0.1f, {}, 0.01f, 3));
  auto cfg = make_config(16, 32, 3);
  TrainSchedule s;
  s.total_steps = 0;
  s.batch_size = 8;
  const auto result = train(cfg, s, source, 77);
  const auto fresh = init_params<float>(cfg, 77);
  CHECK(result.params.w_enc.data == fresh.w_enc.data);
  CHECK(result.params.w_dec.data == fresh.w_dec.data);
  CHECK(result.history.records.empty());
}

TEST_CASE("train: short synthetic run reduces MSE and is seed-deterministic") {
  const auto cfg = make_config(16, 64, 3);
  TrainSchedule s;
  s.total_steps = 100;
  s.batch_size = 128;
  s.base_lr = 2e-3;
  s.warmup_steps = 5;
  s.k_anneal_fraction = 0;  // hold K fixed so first/last MSE are comparable
  TrainOptions opt;
  opt.log_every = 10;

  const auto run = [&]() {
    SyntheticSource source(make_dictionary(48, 16, 0.08f, {}, 0.01f, 5));
    return train(cfg, s, source, 123, opt);
  };
  const auto a = run();
  REQUIRE(a.history.records.size() > 2);
  CHECK(a.history.records.back().mse < a.history.records.front().mse);

  const auto b = run();
  REQUIRE(a.history.records.size() == b.history.records.size());
  for (std::size_t i = 0; i < a.history.records.size(); ++i) {
    CHECK(a.history.records[i].mse == b.history.records[i].mse);
    CHECK(a.history.records[i].l0_mean == b.history.records[i].l0_mean);
    CHECK(a.history.records[i].fraction_never_fired ==
          b.history.records[i].fraction_never_fired);
  }
}

TEST_CASE("train: names the completed steps when the source runs dry") {
  SyntheticSource inner(make_dictionary(32, 16, 0.1f, {}, 0.01f, 3));
  LimitedSource source(inner, 40);
  const auto cfg = make_config(16, 32, 3);
  TrainSchedule s;
  s.total_steps = 10;
  s.batch_size = 16;
  try {
    train(cfg, s, source, 1);
    FAIL("expected DataExhaustedError");
  } catch (const DataExhaustedError& e) {
    CHECK(e.steps_completed == 2);
  }
}

TEST_CASE("train: vanilla keeps decoder columns at unit norm every step") {
  auto cfg = make_config(16, 32, 32, Variant::Vanilla, 1e-4f);
  TrainSchedule s;
  s.total_steps = 8;
  s.batch_size = 32;
  s.warmup_steps = 2;
  SyntheticSource source(make_dictionary(48, 16, 0.08f, {}, 0.01f, 5));
  const auto result = train(cfg, s, source, 9);
  for (std::size_t i = 0; i < 32; ++i)
    CHECK(std::abs(nrm2(result.params.dec_col(i), 16) - 1.0) < 1e-6);
}

TEST_CASE("train: rejects JumpReLU configs") {
  auto cfg = make_config(16, 32, 3, Variant::JumpRelu);
  SyntheticSource source(make_dictionary(32, 16, 0.1f, {}, 0.01f, 3));
  TrainSchedule s;
  s.total_steps = 1;
  s.batch_size = 4;
  CHECK_THROWS_AS(train(cfg, s, source, 1), ContractError);
}
