// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sae/activations.hpp"

namespace sae {

// Activation container, magic "ACTV". Little-endian throughout:
//   magic[4] | u32 version | u32 D | u8 dtype (0=f32, 1=bf16) | u64 rows |
//   u32 metadata bytes | metadata (UTF-8 key=value lines) |
//   row-major payload | packed valid-mask bits (LSB-first per byte)
// Full layout in docs/formats.md.

enum class ActDtype : std::uint8_t { F32 = 0, BF16 = 1 };

std::uint16_t f32_to_bf16(float v);  // round-to-nearest-even
float bf16_to_f32(std::uint16_t v);

struct ActivationFileInfo {
  std::uint32_t version = 1;
  std::uint32_t d = 0;
  ActDtype dtype = ActDtype::F32;
  std::uint64_t rows = 0;
  std::map<std::string, std::string> metadata;  // position, model, ...
};

std::string format_metadata(const std::map<std::string, std::string>& kv);

// Streaming writer; rows may arrive over several append calls. The row
// count is patched into the header and the mask bits land after the
// payload when finalize() runs (also run by the destructor).
class ActivationFileWriter {
 public:
  ActivationFileWriter(const std::string& path, std::uint32_t d, ActDtype dtype,
                       const std::map<std::string, std::string>& metadata);
  ~ActivationFileWriter();
  ActivationFileWriter(const ActivationFileWriter&) = delete;
  ActivationFileWriter& operator=(const ActivationFileWriter&) = delete;

  void append(const Mat<float>& rows, const std::vector<std::uint8_t>& valid);
  void append_row(const float* row, bool valid);
  void finalize();

 private:
  std::FILE* f_ = nullptr;
  std::string path_;
  std::uint32_t d_ = 0;
  ActDtype dtype_;
  std::uint64_t rows_ = 0;
  std::vector<std::uint8_t> mask_bits_;
  bool finalized_ = false;
};

// Single-shot writer for an in-memory batch.
void write_activation_file(const std::string& path, const Mat<float>& rows,
                           const std::vector<std::uint8_t>& valid, ActDtype dtype,
                           const std::map<std::string, std::string>& metadata);

// Streaming reader. Header is parsed eagerly; rows are decoded on demand.
class ActivationFileReader {
 public:
  explicit ActivationFileReader(const std::string& path);
  ~ActivationFileReader();
  ActivationFileReader(const ActivationFileReader&) = delete;
  ActivationFileReader& operator=(const ActivationFileReader&) = delete;

  const ActivationFileInfo& info() const { return info_; }

  // Reads up to n rows into out (x_in + valid); returns rows read.
  std::size_t read(std::size_t n, Mat<float>& out, std::vector<std::uint8_t>& valid);
  void rewind();

 private:
  std::FILE* f_ = nullptr;
  std::string path_;
  ActivationFileInfo info_;
  std::uint64_t data_offset_ = 0;
  std::uint64_t next_row_ = 0;
  std::vector<std::uint8_t> mask_bits_;
  std::vector<std::uint8_t> row_buf_;
};

// Loads a whole file into memory (desk-scale analysis paths).
void load_activation_file(const std::string& path, Mat<float>& rows,
                          std::vector<std::uint8_t>& valid, ActivationFileInfo* info);

// ActivationSource over one file, optionally paired with a target file of
// identical row count and validity (transcoder sources). With skip_invalid
// set, boundary rows are dropped at the source, which is the contract the
// training buffer relies on.
class FileSource : public ActivationSource {
 public:
  explicit FileSource(const std::string& path, bool skip_invalid = true);
  FileSource(const std::string& path, const std::string& target_path,
             bool skip_invalid = true);
  int d_model() const override { return int(reader_->info().d); }
  bool has_targets() const override { return target_reader_ != nullptr; }
  std::size_t next(std::size_t n, ActivationBatch& out) override;
  std::string label() const override;

 private:
  std::unique_ptr<ActivationFileReader> reader_;
  std::unique_ptr<ActivationFileReader> target_reader_;
  bool skip_invalid_;
};

// Token-text sidecar, magic "ACTT": u32 version, u64 count, then one
// length-prefixed UTF-8 string per activation row.
void write_text_sidecar(const std::string& path, const std::vector<std::string>& tokens);
std::vector<std::string> read_text_sidecar(const std::string& path);

}  // namespace sae
