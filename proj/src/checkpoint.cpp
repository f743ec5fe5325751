// SPDX-License-Identifier: Apache-2.0
#include "sae/checkpoint.hpp"

#include <cstdio>
#include <cstring>

namespace sae {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'E', 'F'};
constexpr std::uint32_t kVersion = 1;

void write_raw(std::FILE* f, const void* p, std::size_t n) {
  if (std::fwrite(p, 1, n, f) != n) throw Error("checkpoint write failed");
}

template <typename T>
void write_le(std::FILE* f, T v) {
  write_raw(f, &v, sizeof(T));
}

void write_string(std::FILE* f, const std::string& s) {
  write_le<std::uint32_t>(f, std::uint32_t(s.size()));
  write_raw(f, s.data(), s.size());
}

void read_raw(std::FILE* f, void* p, std::size_t n, const std::string& what) {
  const std::uint64_t off = std::uint64_t(std::ftell(f));
  if (std::fread(p, 1, n, f) != n)
    throw FileFormatError("truncated checkpoint while reading " + what, off);
}

template <typename T>
T read_le(std::FILE* f, const std::string& what) {
  T v;
  read_raw(f, &v, sizeof(T), what);
  return v;
}

std::string read_string(std::FILE* f, const std::string& what) {
  const auto len = read_le<std::uint32_t>(f, what + " length");
  std::string s(len, '\0');
  read_raw(f, s.data(), len, what);
  return s;
}

// The in-memory decoder is feature-major (row i = column i); on disk the
// logical D x F row-major layout is stored.
void write_dec_as_dxf(std::FILE* f, const Mat<float>& dec_rows) {
  const std::size_t F = dec_rows.rows;
  const std::size_t D = dec_rows.cols;
  std::vector<float> row(F);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t i = 0; i < F; ++i) row[i] = dec_rows(i, d);
    write_raw(f, row.data(), F * 4);
  }
}

Mat<float> read_dec_from_dxf(std::FILE* f, std::size_t F, std::size_t D) {
  Mat<float> dec(F, D);
  std::vector<float> row(F);
  for (std::size_t d = 0; d < D; ++d) {
    read_raw(f, row.data(), F * 4, "w_dec");
    for (std::size_t i = 0; i < F; ++i) dec(i, d) = row[i];
  }
  return dec;
}

void write_tensors(std::FILE* f, const Mat<float>& w_enc,
                   const std::vector<float>& b_enc, const Mat<float>& w_dec,
                   const std::vector<float>& b_dec) {
  write_raw(f, w_enc.data.data(), w_enc.size() * 4);
  write_raw(f, b_enc.data(), b_enc.size() * 4);
  write_dec_as_dxf(f, w_dec);
  write_raw(f, b_dec.data(), b_dec.size() * 4);
}

void read_tensors(std::FILE* f, std::size_t F, std::size_t D, Mat<float>& w_enc,
                  std::vector<float>& b_enc, Mat<float>& w_dec,
                  std::vector<float>& b_dec) {
  w_enc = Mat<float>(F, D);
  read_raw(f, w_enc.data.data(), w_enc.size() * 4, "w_enc");
  b_enc.resize(F);
  read_raw(f, b_enc.data(), F * 4, "b_enc");
  w_dec = read_dec_from_dxf(f, F, D);
  b_dec.resize(D);
  read_raw(f, b_dec.data(), D * 4, "b_dec");
}

}  // namespace

std::string sae_name(const std::string& position_label, const SaeConfig& cfg) {
  const double exp = cfg.expansion();
  std::string exps = exp == double(std::int64_t(exp))
                         ? std::to_string(std::int64_t(exp))
                         : std::to_string(exp);
  std::string variant;
  switch (cfg.variant) {
    case Variant::Vanilla: variant = "Vanilla"; break;
    case Variant::TopK: variant = "TopK"; break;
    case Variant::JumpRelu: variant = "JumpReLU"; break;
  }
  return position_label + "-" + exps + "x-" + variant;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  ck.params.check_dims(ck.config);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error("cannot open for writing: " + path);
  try {
    write_raw(f, kMagic, 4);
    write_le<std::uint32_t>(f, kVersion);

    write_le<std::uint32_t>(f, std::uint32_t(ck.config.d_model));
    write_le<std::uint32_t>(f, std::uint32_t(ck.config.n_features));
    write_le<std::uint32_t>(f, std::uint32_t(ck.config.k));
    write_le<std::uint8_t>(f, std::uint8_t(ck.config.variant));
    write_le<std::uint8_t>(f, std::uint8_t(ck.config.position_kind));
    write_le<float>(f, ck.config.l1_coeff);

    write_le<std::int64_t>(f, ck.schedule.total_steps);
    write_le<double>(f, ck.schedule.base_lr);
    write_le<std::int64_t>(f, ck.schedule.warmup_steps);
    write_le<double>(f, ck.schedule.decay_fraction);
    write_le<double>(f, ck.schedule.k_anneal_fraction);
    write_le<std::int64_t>(f, ck.schedule.batch_size);

    write_le<std::int64_t>(f, ck.step_count);
    write_string(f, ck.label);

    write_le<float>(f, ck.norm.s_in);
    write_le<float>(f, ck.norm.s_out);
    write_le<std::uint8_t>(f, ck.norm_folded ? 1 : 0);

    write_le<std::uint8_t>(f, ck.params.theta.has_value() ? 1 : 0);
    write_le<float>(f, ck.params.theta.value_or(0.0f));

    write_tensors(f, ck.params.w_enc, ck.params.b_enc, ck.params.w_dec,
                  ck.params.b_dec);

    write_le<std::uint8_t>(f, ck.adam.has_value() ? 1 : 0);
    if (ck.adam) {
      write_le<std::int64_t>(f, ck.adam->step_count);
      write_tensors(f, ck.adam->m.w_enc, ck.adam->m.b_enc, ck.adam->m.w_dec,
                    ck.adam->m.b_dec);
      write_tensors(f, ck.adam->v.w_enc, ck.adam->v.b_enc, ck.adam->v.w_dec,
                    ck.adam->v.b_dec);
    }
    std::fclose(f);
  } catch (...) {
    std::fclose(f);
    throw;
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error("cannot open for reading: " + path);
  try {
    char magic[4];
    read_raw(f, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
      throw FileFormatError("bad checkpoint magic in " + path, 0);
    const auto version = read_le<std::uint32_t>(f, "version");
    if (version != kVersion)
      throw FileFormatError("unsupported checkpoint version " +
                                std::to_string(version), 4);

    Checkpoint ck;
    ck.config.d_model = int(read_le<std::uint32_t>(f, "d_model"));
    ck.config.n_features = int(read_le<std::uint32_t>(f, "n_features"));
    ck.config.k = int(read_le<std::uint32_t>(f, "k"));
    ck.config.variant = Variant(read_le<std::uint8_t>(f, "variant"));
    ck.config.position_kind = PositionKind(read_le<std::uint8_t>(f, "position_kind"));
    ck.config.l1_coeff = read_le<float>(f, "l1_coeff");

    ck.schedule.total_steps = read_le<std::int64_t>(f, "total_steps");
    ck.schedule.base_lr = read_le<double>(f, "base_lr");
    ck.schedule.warmup_steps = read_le<std::int64_t>(f, "warmup_steps");
    ck.schedule.decay_fraction = read_le<double>(f, "decay_fraction");
    ck.schedule.k_anneal_fraction = read_le<double>(f, "k_anneal_fraction");
    ck.schedule.batch_size = read_le<std::int64_t>(f, "batch_size");

    ck.step_count = read_le<std::int64_t>(f, "step_count");
    ck.label = read_string(f, "label");

    ck.norm.s_in = read_le<float>(f, "s_in");
    ck.norm.s_out = read_le<float>(f, "s_out");
    ck.norm_folded = read_le<std::uint8_t>(f, "norm_folded") != 0;

    const bool has_theta = read_le<std::uint8_t>(f, "theta flag") != 0;
    const float theta = read_le<float>(f, "theta");
    if (has_theta) ck.params.theta = theta;

    const auto F = std::size_t(ck.config.n_features);
    const auto D = std::size_t(ck.config.d_model);
    read_tensors(f, F, D, ck.params.w_enc, ck.params.b_enc, ck.params.w_dec,
                 ck.params.b_dec);

    const bool has_adam = read_le<std::uint8_t>(f, "adam flag") != 0;
    if (has_adam) {
      AdamState<float> adam;
      adam.step_count = read_le<std::int64_t>(f, "adam step count");
      read_tensors(f, F, D, adam.m.w_enc, adam.m.b_enc, adam.m.w_dec, adam.m.b_dec);
      read_tensors(f, F, D, adam.v.w_enc, adam.v.b_enc, adam.v.w_dec, adam.v.b_dec);
      ck.adam = std::move(adam);
    }
    std::fclose(f);
    return ck;
  } catch (...) {
    std::fclose(f);
    throw;
  }
}

}  // namespace sae
