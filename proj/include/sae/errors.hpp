// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition / dimension violations on in-process API calls.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration; carries every offending key at once.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
  ConfigError(const std::string& msg, std::vector<std::string> keys)
      : Error(msg), bad_keys(std::move(keys)) {}
  std::vector<std::string> bad_keys;
};

// Malformed binary container; offset is the byte position of the failure.
class FileFormatError : public Error {
 public:
  FileFormatError(const std::string& msg, std::uint64_t byte_offset)
      : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::uint64_t offset = 0;
};

// Source ran dry before the requested number of steps/tokens.
class DataExhaustedError : public Error {
 public:
  DataExhaustedError(const std::string& msg, std::int64_t completed)
      : Error(msg), steps_completed(completed) {}
  std::int64_t steps_completed = 0;
};

// Non-finite loss or gradient; message carries the step context.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Decoder columns that cannot be unitized.
class DeadFeatureError : public Error {
 public:
  DeadFeatureError(const std::string& msg, std::vector<std::uint32_t> features)
      : Error(msg), dead_features(std::move(features)) {}
  std::vector<std::uint32_t> dead_features;
};

// Remote scoring: response carried no usable score.
class ScoringError : public Error {
 public:
  ScoringError(const std::string& msg, std::string response)
      : Error(msg), raw_response(std::move(response)) {}
  std::string raw_response;
};

// Remote scoring: HTTP transport failed after all retries.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace sae
