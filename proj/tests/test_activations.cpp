// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <set>

#include "sae/activation_file.hpp"
#include "sae/buffer.hpp"
#include "sae/train.hpp"
#include "testutil.hpp"

using namespace sae;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Finite counting stream: row r has x[0] = r, rest zero.
class CountingSource : public ActivationSource {
 public:
  CountingSource(int d, std::size_t total) : d_(d), total_(total) {}
  int d_model() const override { return d_; }
  bool has_targets() const override { return false; }
  std::size_t next(std::size_t n, ActivationBatch& out) override {
    const std::size_t take = std::min(n, total_ - emitted_);
    out.resize(take, std::size_t(d_), false);
    for (std::size_t r = 0; r < take; ++r) {
      std::fill_n(out.x_in.row(r), d_, 0.0f);
      out.x_in(r, 0) = float(emitted_ + r);
    }
    emitted_ += take;
    return take;
  }

 private:
  int d_;
  std::size_t total_;
  std::size_t emitted_ = 0;
};

// Documents of `doc_len` highly-correlated rows; x[0] carries the doc id.
class DocumentSource : public ActivationSource {
 public:
  DocumentSource(int d, std::size_t docs, std::size_t doc_len)
      : d_(d), total_(docs * doc_len), doc_len_(doc_len) {}
  int d_model() const override { return d_; }
  bool has_targets() const override { return false; }
  std::size_t next(std::size_t n, ActivationBatch& out) override {
    const std::size_t take = std::min(n, total_ - emitted_);
    out.resize(take, std::size_t(d_), false);
    for (std::size_t r = 0; r < take; ++r) {
      std::fill_n(out.x_in.row(r), d_, 0.0f);
      out.x_in(r, 0) = float((emitted_ + r) / doc_len_);
    }
    emitted_ += take;
    return take;
  }

 private:
  int d_;
  std::size_t total_;
  std::size_t doc_len_;
  std::size_t emitted_ = 0;
};

}  // namespace

TEST_CASE("synthetic: vanishing fire probability gives zero rows") {
  auto dict = make_dictionary(64, 16, 1e-9f, {}, 0.0f, 3);
  SyntheticGenerator gen(dict);
  ActivationBatch batch;
  gen.sample(200, batch);
  for (const float v : batch.x_in.data) CHECK(v == 0.0f);
}

TEST_CASE("synthetic: single active feature reproduces the dictionary row") {
  auto dict = make_dictionary(32, 16, 0.03f, {}, 0.0f, 4);
  SyntheticGenerator gen(dict);
  ActivationBatch batch;
  SparseRows<float> codes;
  gen.sample(500, batch, &codes);
  int checked = 0;
  for (std::size_t r = 0; r < 500; ++r) {
    if (codes.row_nnz(r) != 1) continue;
    const auto q = codes.off[r];
    const float m = codes.val[q];
    const float* row = dict.ground_truth.row(codes.idx[q]);
    for (std::size_t j = 0; j < 16; ++j) CHECK(batch.x_in(r, j) == m * row[j]);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("synthetic: empirical active count concentrates at G * fire_prob") {
  auto dict = make_default_dictionary(5);
  SyntheticGenerator gen(dict);
  ActivationBatch batch;
  SparseRows<float> codes;
  const std::size_t rows = 100000;
  double total = 0;
  for (std::size_t done = 0; done < rows; done += 10000) {
    gen.sample(10000, batch, &codes);
    total += double(codes.nnz());
  }
  const double mean = total / double(rows);
  const double expect = 256.0 * (5.0 / 256.0);
  CHECK(std::abs(mean - expect) < 3.0 * std::sqrt(expect));
}

TEST_CASE("synthetic: dictionary rows are unit norm and overcomplete") {
  const auto dict = make_default_dictionary(6);
  CHECK(dict.g() > dict.d());
  for (int i = 0; i < dict.g(); ++i)
    CHECK(std::abs(nrm2(dict.ground_truth.row(std::size_t(i)), 64) - 1.0) < 1e-6);
  CHECK_THROWS_AS(make_dictionary(16, 64, 0.1f, {}, 0.0f, 1), ContractError);
}

TEST_CASE("synthetic transcoder: targets share codes through a second dictionary") {
  auto in_dict = make_dictionary(32, 16, 0.05f, {}, 0.0f, 7);
  auto out_dict = make_dictionary(32, 16, 0.05f, {}, 0.0f, 8);
  SyntheticGenerator gen(in_dict, out_dict.ground_truth);
  ActivationBatch batch;
  SparseRows<float> codes;
  gen.sample(100, batch, &codes);
  REQUIRE(batch.has_targets());
  for (std::size_t r = 0; r < 100; ++r) {
    if (codes.row_nnz(r) != 1) continue;
    const auto q = codes.off[r];
    for (std::size_t j = 0; j < 16; ++j)
      CHECK(batch.x_out->operator()(r, j) ==
            codes.val[q] * out_dict.ground_truth(codes.idx[q], j));
  }
}

TEST_CASE("activation file: f32 round trip is bitwise") {
  std::mt19937_64 rng(9);
  const auto rows = testutil::random_mat<float>(1000, 24, rng);
  std::vector<std::uint8_t> valid(1000, 1);
  valid[17] = 0;
  valid[999] = 0;
  const auto path = temp_path("roundtrip_f32.actv");
  write_activation_file(path, rows, valid, ActDtype::F32,
                        {{"position", "L15R"}, {"model", "test-model"}});

  Mat<float> got;
  std::vector<std::uint8_t> got_valid;
  ActivationFileInfo info;
  load_activation_file(path, got, got_valid, &info);
  CHECK(info.d == 24);
  CHECK(info.rows == 1000);
  CHECK(info.metadata.at("position") == "L15R");
  CHECK(info.metadata.at("model") == "test-model");
  CHECK(got.data == rows.data);
  CHECK(got_valid == valid);
}

TEST_CASE("activation file: bf16 payload is stable at 16-bit precision") {
  std::mt19937_64 rng(10);
  const auto rows = testutil::random_mat<float>(128, 16, rng);
  std::vector<std::uint8_t> valid(128, 1);
  const auto path_a = temp_path("roundtrip_bf16_a.actv");
  write_activation_file(path_a, rows, valid, ActDtype::BF16, {});

  Mat<float> once;
  std::vector<std::uint8_t> v1;
  load_activation_file(path_a, once, v1, nullptr);
  // every value survived one rounding; writing again must be exact
  const auto path_b = temp_path("roundtrip_bf16_b.actv");
  write_activation_file(path_b, once, v1, ActDtype::BF16, {});
  Mat<float> twice;
  std::vector<std::uint8_t> v2;
  load_activation_file(path_b, twice, v2, nullptr);
  CHECK(once.data == twice.data);
  for (std::size_t t = 0; t < rows.data.size(); ++t)
    CHECK(std::abs(once.data[t] - rows.data[t]) <= 0.01f * std::abs(rows.data[t]));
}

TEST_CASE("bf16 conversion: round-to-nearest-even and value preservation") {
  CHECK(bf16_to_f32(f32_to_bf16(1.0f)) == 1.0f);
  CHECK(bf16_to_f32(f32_to_bf16(-2.5f)) == -2.5f);
  CHECK(bf16_to_f32(f32_to_bf16(0.0f)) == 0.0f);
  const float v = 3.14159265f;
  const float r = bf16_to_f32(f32_to_bf16(v));
  CHECK(std::abs(r - v) < 0.01f);
  CHECK(f32_to_bf16(bf16_to_f32(f32_to_bf16(v))) == f32_to_bf16(v));
}

TEST_CASE("activation file: empty body with a valid header yields zero tokens") {
  const auto path = temp_path("empty.actv");
  write_activation_file(path, Mat<float>(0, 8), {}, ActDtype::F32, {});
  ActivationFileReader reader(path);
  CHECK(reader.info().rows == 0);
  Mat<float> rows;
  std::vector<std::uint8_t> valid;
  CHECK(reader.read(100, rows, valid) == 0);
}

TEST_CASE("activation file: consumer dimension mismatch names both values") {
  std::mt19937_64 rng(11);
  const auto path = temp_path("dmismatch.actv");
  write_activation_file(path, testutil::random_mat<float>(10, 8, rng),
                        std::vector<std::uint8_t>(10, 1), ActDtype::F32, {});
  FileSource source(path);
  SaeConfig cfg;
  cfg.d_model = 16;
  cfg.n_features = 32;
  cfg.k = 4;
  TrainSchedule sched;
  sched.total_steps = 1;
  sched.batch_size = 4;
  try {
    train(cfg, sched, source, 1);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("8") != std::string::npos);
    CHECK(msg.find("16") != std::string::npos);
  }
}

TEST_CASE("activation file: bad magic and truncation are structured errors") {
  const auto path = temp_path("badmagic.actv");
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite("NOPE", 1, 4, f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(ActivationFileReader{path}, FileFormatError);

  std::mt19937_64 rng(12);
  const auto full = temp_path("truncated.actv");
  write_activation_file(full, testutil::random_mat<float>(100, 8, rng),
                        std::vector<std::uint8_t>(100, 1), ActDtype::F32, {});
  const auto cut = temp_path("truncated_cut.actv");
  {
    std::FILE* in = std::fopen(full.c_str(), "rb");
    std::FILE* out = std::fopen(cut.c_str(), "wb");
    char buf[64];
    std::fread(buf, 1, 64, in);
    std::fwrite(buf, 1, 64, out);
    std::fclose(in);
    std::fclose(out);
  }
  try {
    ActivationFileReader reader(cut);
    FAIL("expected FileFormatError");
  } catch (const FileFormatError& e) {
    CHECK(e.offset > 0);
  }
}

TEST_CASE("file source: skips invalid rows for training consumers") {
  std::mt19937_64 rng(13);
  const auto rows = testutil::random_mat<float>(64, 8, rng);
  std::vector<std::uint8_t> valid(64, 1);
  for (std::size_t r = 0; r < 64; r += 4) valid[r] = 0;
  const auto path = temp_path("skip.actv");
  write_activation_file(path, rows, valid, ActDtype::F32, {});

  FileSource source(path, /*skip_invalid=*/true);
  ActivationBatch batch;
  const std::size_t got = collect_rows(source, 64, batch);
  CHECK(got == 48);
  for (const auto v : batch.valid) CHECK(v == 1);

  FileSource raw(path, /*skip_invalid=*/false);
  ActivationBatch all;
  CHECK(collect_rows(raw, 64, all) == 64);
  CHECK(all.n_valid() == 48);
}

TEST_CASE("text sidecar round trip") {
  const std::vector<std::string> tokens{" the", " war", ".", "", " \xF0\x9F\x8C\x8D"};
  const auto path = temp_path("tokens.actt");
  write_text_sidecar(path, tokens);
  CHECK(read_text_sidecar(path) == tokens);
}

TEST_CASE("buffer: one refill yields a permutation of the producer stream") {
  CountingSource producer(4, 8);
  ShuffledSource buffer(producer, 8, /*seed=*/99);
  ActivationBatch batch;
  const std::size_t got = collect_rows(buffer, 8, batch);
  REQUIRE(got == 8);
  std::set<int> seen;
  for (std::size_t r = 0; r < 8; ++r) seen.insert(int(batch.x_in(r, 0)));
  CHECK(seen == std::set<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("buffer: fixed seed reproduces the same permutation") {
  const auto run = [] {
    CountingSource producer(4, 64);
    ShuffledSource buffer(producer, 16, 7);
    std::vector<float> order;
    ActivationBatch batch;
    while (buffer.next(5, batch) > 0)
      for (std::size_t r = 0; r < batch.n_rows(); ++r)
        order.push_back(batch.x_in(r, 0));
    return order;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.size() == 64);
  CHECK(a == b);
}

TEST_CASE("buffer: conservation across many refill cycles") {
  const std::size_t capacity = 200;
  const std::size_t total = 1300;
  CountingSource producer(4, total);
  ShuffledSource buffer(producer, capacity, 31);
  std::vector<int> counts(total, 0);
  ActivationBatch batch;
  std::size_t consumed = 0;
  while (true) {
    const std::size_t got = buffer.next(64, batch);
    if (got == 0) break;
    for (std::size_t r = 0; r < got; ++r)
      ++counts[std::size_t(batch.x_in(r, 0))];
    consumed += got;
  }
  CHECK(consumed == total);
  CHECK(buffer.refill_count() >= 10);
  for (const int c : counts) CHECK(c == 1);  // exactly once: no loss, no dupes
}

TEST_CASE("buffer: shuffling breaks within-document adjacency (chi-squared)") {
  const std::size_t doc_len = 16;
  const std::size_t docs = 160;
  DocumentSource producer(4, docs, doc_len);
  ShuffledSource buffer(producer, 512, 17);

  std::vector<int> order;
  ActivationBatch batch;
  while (buffer.next(64, batch) > 0)
    for (std::size_t r = 0; r < batch.n_rows(); ++r)
      order.push_back(int(batch.x_in(r, 0)));
  REQUIRE(order.size() == docs * doc_len);

  std::size_t same = 0;
  for (std::size_t i = 0; i + 1 < order.size(); ++i)
    same += order[i] == order[i + 1] ? 1 : 0;
  const double n_pairs = double(order.size() - 1);
  const double p0 = double(doc_len - 1) / double(doc_len);  // unshuffled rate
  const double e_same = p0 * n_pairs;
  const double e_diff = (1.0 - p0) * n_pairs;
  const double o_same = double(same);
  const double o_diff = n_pairs - o_same;
  const double chi2 = (o_same - e_same) * (o_same - e_same) / e_same +
                      (o_diff - e_diff) * (o_diff - e_diff) / e_diff;
  CHECK(o_same < e_same);
  CHECK(chi2 > 6.635);  // p < 0.01 at one degree of freedom
}

TEST_CASE("buffer: preserves validity flags") {
  std::mt19937_64 rng(14);
  const auto rows = testutil::random_mat<float>(32, 8, rng);
  std::vector<std::uint8_t> valid(32, 1);
  valid[3] = valid[9] = 0;
  const auto path = temp_path("bufvalid.actv");
  write_activation_file(path, rows, valid, ActDtype::F32, {});
  FileSource source(path, /*skip_invalid=*/false);
  ShuffledSource buffer(source, 32, 3);
  ActivationBatch batch;
  std::size_t invalid_seen = 0;
  while (buffer.next(8, batch) > 0)
    for (std::size_t r = 0; r < batch.n_rows(); ++r)
      invalid_seen += batch.valid[r] ? 0 : 1;
  CHECK(invalid_seen == 2);
}
