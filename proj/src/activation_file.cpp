// SPDX-License-Identifier: Apache-2.0
#include "sae/activation_file.hpp"

#include <algorithm>
#include <cstring>

namespace sae {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'T', 'V'};
constexpr char kTextMagic[4] = {'A', 'C', 'T', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t tell(std::FILE* f) { return std::uint64_t(std::ftell(f)); }

void write_raw(std::FILE* f, const void* p, std::size_t n) {
  if (std::fwrite(p, 1, n, f) != n) throw Error("write failed");
}

template <typename T>
void write_le(std::FILE* f, T v) {
  // Little-endian host assumed; layout is fixed little-endian on disk.
  write_raw(f, &v, sizeof(T));
}

void read_raw(std::FILE* f, void* p, std::size_t n, const std::string& what) {
  const std::uint64_t off = tell(f);
  if (std::fread(p, 1, n, f) != n)
    throw FileFormatError("truncated file while reading " + what, off);
}

template <typename T>
T read_le(std::FILE* f, const std::string& what) {
  T v;
  read_raw(f, &v, sizeof(T), what);
  return v;
}

std::map<std::string, std::string> parse_metadata(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    pos = eol + 1;
  }
  return kv;
}

std::size_t row_bytes(std::uint32_t d, ActDtype t) {
  return std::size_t(d) * (t == ActDtype::F32 ? 4 : 2);
}

}  // namespace

std::uint16_t f32_to_bf16(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  // Round to nearest even on the truncated mantissa; NaN stays NaN.
  if ((bits & 0x7fffffffu) > 0x7f800000u) return std::uint16_t((bits >> 16) | 0x0040u);
  const std::uint32_t rounding = 0x7fffu + ((bits >> 16) & 1u);
  return std::uint16_t((bits + rounding) >> 16);
}

float bf16_to_f32(std::uint16_t v) {
  const std::uint32_t bits = std::uint32_t(v) << 16;
  float out;
  std::memcpy(&out, &bits, 4);
  return out;
}

std::string format_metadata(const std::map<std::string, std::string>& kv) {
  std::string text;
  for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
  return text;
}

ActivationFileWriter::ActivationFileWriter(
    const std::string& path, std::uint32_t d, ActDtype dtype,
    const std::map<std::string, std::string>& metadata)
    : path_(path), d_(d), dtype_(dtype) {
  if (d == 0) throw ContractError("activation file needs D >= 1");
  f_ = std::fopen(path.c_str(), "wb");
  if (!f_) throw Error("cannot open for writing: " + path);
  write_raw(f_, kMagic, 4);
  write_le<std::uint32_t>(f_, kVersion);
  write_le<std::uint32_t>(f_, d_);
  write_le<std::uint8_t>(f_, std::uint8_t(dtype_));
  write_le<std::uint64_t>(f_, 0);  // row count, patched in finalize()
  const std::string meta = format_metadata(metadata);
  write_le<std::uint32_t>(f_, std::uint32_t(meta.size()));
  write_raw(f_, meta.data(), meta.size());
}

ActivationFileWriter::~ActivationFileWriter() {
  try {
    finalize();
  } catch (...) {
  }
}

void ActivationFileWriter::append_row(const float* row, bool valid) {
  if (finalized_) throw Error("append after finalize");
  if (dtype_ == ActDtype::F32) {
    write_raw(f_, row, std::size_t(d_) * 4);
  } else {
    std::vector<std::uint16_t> half(d_);
    for (std::uint32_t j = 0; j < d_; ++j) half[j] = f32_to_bf16(row[j]);
    write_raw(f_, half.data(), half.size() * 2);
  }
  if (rows_ % 8 == 0) mask_bits_.push_back(0);
  if (valid) mask_bits_.back() |= std::uint8_t(1u << (rows_ % 8));
  ++rows_;
}

void ActivationFileWriter::append(const Mat<float>& rows,
                                  const std::vector<std::uint8_t>& valid) {
  if (rows.cols != d_)
    throw ContractError("append: row width " + std::to_string(rows.cols) +
                        " != header D " + std::to_string(d_));
  if (valid.size() != rows.rows)
    throw ContractError("append: valid mask length mismatch");
  for (std::size_t r = 0; r < rows.rows; ++r) append_row(rows.row(r), valid[r]);
}

void ActivationFileWriter::finalize() {
  if (finalized_ || !f_) return;
  finalized_ = true;
  write_raw(f_, mask_bits_.data(), mask_bits_.size());
  std::fseek(f_, 13, SEEK_SET);  // magic + version + D + dtype
  write_le<std::uint64_t>(f_, rows_);
  std::fclose(f_);
  f_ = nullptr;
}

void write_activation_file(const std::string& path, const Mat<float>& rows,
                           const std::vector<std::uint8_t>& valid, ActDtype dtype,
                           const std::map<std::string, std::string>& metadata) {
  ActivationFileWriter w(path, std::uint32_t(rows.cols), dtype, metadata);
  w.append(rows, valid);
  w.finalize();
}

ActivationFileReader::ActivationFileReader(const std::string& path) : path_(path) {
  f_ = std::fopen(path.c_str(), "rb");
  if (!f_) throw Error("cannot open for reading: " + path);
  char magic[4];
  read_raw(f_, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FileFormatError("bad magic in " + path, 0);
  info_.version = read_le<std::uint32_t>(f_, "version");
  if (info_.version != kVersion)
    throw FileFormatError("unsupported version " + std::to_string(info_.version), 4);
  info_.d = read_le<std::uint32_t>(f_, "D");
  if (info_.d == 0) throw FileFormatError("D must be >= 1", 8);
  const auto dtype = read_le<std::uint8_t>(f_, "dtype");
  if (dtype > 1)
    throw FileFormatError("unknown dtype code " + std::to_string(dtype), 12);
  info_.dtype = ActDtype(dtype);
  info_.rows = read_le<std::uint64_t>(f_, "row count");
  const auto meta_len = read_le<std::uint32_t>(f_, "metadata length");
  std::string meta(meta_len, '\0');
  read_raw(f_, meta.data(), meta_len, "metadata");
  info_.metadata = parse_metadata(meta);
  data_offset_ = tell(f_);

  // Mask bits live after the payload; load them now, then seek back.
  const std::uint64_t mask_off =
      data_offset_ + info_.rows * row_bytes(info_.d, info_.dtype);
  const std::uint64_t mask_len = (info_.rows + 7) / 8;
  mask_bits_.resize(mask_len);
  if (std::fseek(f_, long(mask_off), SEEK_SET) != 0)
    throw FileFormatError("cannot seek to valid mask", mask_off);
  read_raw(f_, mask_bits_.data(), mask_len, "valid mask");
  std::fseek(f_, long(data_offset_), SEEK_SET);
  row_buf_.resize(row_bytes(info_.d, info_.dtype));
}

ActivationFileReader::~ActivationFileReader() {
  if (f_) std::fclose(f_);
}

std::size_t ActivationFileReader::read(std::size_t n, Mat<float>& out,
                                       std::vector<std::uint8_t>& valid) {
  const std::size_t take =
      std::size_t(std::min<std::uint64_t>(n, info_.rows - next_row_));
  out = Mat<float>(take, info_.d);
  valid.assign(take, 1);
  for (std::size_t r = 0; r < take; ++r) {
    read_raw(f_, row_buf_.data(), row_buf_.size(),
             "row " + std::to_string(next_row_));
    float* dst = out.row(r);
    if (info_.dtype == ActDtype::F32) {
      std::memcpy(dst, row_buf_.data(), row_buf_.size());
    } else {
      const auto* half = reinterpret_cast<const std::uint16_t*>(row_buf_.data());
      for (std::uint32_t j = 0; j < info_.d; ++j) dst[j] = bf16_to_f32(half[j]);
    }
    valid[r] = (mask_bits_[next_row_ / 8] >> (next_row_ % 8)) & 1u;
    ++next_row_;
  }
  return take;
}

void ActivationFileReader::rewind() {
  std::fseek(f_, long(data_offset_), SEEK_SET);
  next_row_ = 0;
}

void load_activation_file(const std::string& path, Mat<float>& rows,
                          std::vector<std::uint8_t>& valid,
                          ActivationFileInfo* info) {
  ActivationFileReader r(path);
  r.read(std::size_t(r.info().rows), rows, valid);
  if (info) *info = r.info();
}

FileSource::FileSource(const std::string& path, bool skip_invalid)
    : reader_(std::make_unique<ActivationFileReader>(path)),
      skip_invalid_(skip_invalid) {}

FileSource::FileSource(const std::string& path, const std::string& target_path,
                       bool skip_invalid)
    : reader_(std::make_unique<ActivationFileReader>(path)),
      target_reader_(std::make_unique<ActivationFileReader>(target_path)),
      skip_invalid_(skip_invalid) {
  if (target_reader_->info().rows != reader_->info().rows)
    throw ContractError("target file row count " +
                        std::to_string(target_reader_->info().rows) +
                        " != input row count " +
                        std::to_string(reader_->info().rows));
}

std::string FileSource::label() const {
  const auto& md = reader_->info().metadata;
  const auto it = md.find("position");
  return it != md.end() ? it->second : "";
}

std::size_t FileSource::next(std::size_t n, ActivationBatch& out) {
  const std::size_t d = std::size_t(reader_->info().d);
  Mat<float> in_rows;
  std::vector<std::uint8_t> in_valid;
  const std::size_t got = reader_->read(n, in_rows, in_valid);
  Mat<float> t_rows;
  std::vector<std::uint8_t> t_valid;
  if (target_reader_) {
    const std::size_t tgot = target_reader_->read(got, t_rows, t_valid);
    if (tgot != got) throw ContractError("target file ended before input file");
    if (t_rows.cols != in_rows.cols)
      throw ContractError("target D " + std::to_string(t_rows.cols) +
                          " != input D " + std::to_string(in_rows.cols));
  }
  if (got == 0) {
    out.resize(0, d, target_reader_ != nullptr);
    return 0;
  }
  if (!skip_invalid_) {
    out.x_in = std::move(in_rows);
    if (target_reader_) out.x_out = std::move(t_rows);
    else out.x_out.reset();
    out.valid = std::move(in_valid);
    return got;
  }
  std::size_t keep = 0;
  for (std::size_t r = 0; r < got; ++r) keep += in_valid[r] ? 1 : 0;
  out.resize(keep, d, target_reader_ != nullptr);
  std::size_t w = 0;
  for (std::size_t r = 0; r < got; ++r) {
    if (!in_valid[r]) continue;
    std::copy_n(in_rows.row(r), d, out.x_in.row(w));
    if (target_reader_) std::copy_n(t_rows.row(r), d, out.x_out->row(w));
    ++w;
  }
  // A fully-invalid block must not read as end-of-data; recurse for more.
  if (keep == 0) return next(n, out);
  return keep;
}

void write_text_sidecar(const std::string& path,
                        const std::vector<std::string>& tokens) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error("cannot open for writing: " + path);
  write_raw(f, kTextMagic, 4);
  write_le<std::uint32_t>(f, kVersion);
  write_le<std::uint64_t>(f, tokens.size());
  for (const auto& t : tokens) {
    write_le<std::uint32_t>(f, std::uint32_t(t.size()));
    write_raw(f, t.data(), t.size());
  }
  std::fclose(f);
}

std::vector<std::string> read_text_sidecar(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error("cannot open for reading: " + path);
  try {
    char magic[4];
    read_raw(f, magic, 4, "magic");
    if (std::memcmp(magic, kTextMagic, 4) != 0)
      throw FileFormatError("bad sidecar magic in " + path, 0);
    const auto version = read_le<std::uint32_t>(f, "version");
    if (version != kVersion)
      throw FileFormatError("unsupported sidecar version", 4);
    const auto count = read_le<std::uint64_t>(f, "token count");
    std::vector<std::string> tokens(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto len = read_le<std::uint32_t>(f, "token length");
      tokens[i].resize(len);
      read_raw(f, tokens[i].data(), len, "token bytes");
    }
    std::fclose(f);
    return tokens;
  } catch (...) {
    std::fclose(f);
    throw;
  }
}

}  // namespace sae
