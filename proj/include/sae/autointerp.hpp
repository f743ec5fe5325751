// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sae/normalize.hpp"
#include "sae/sae_core.hpp"

namespace sae {

// One retained context: the peak activation, its stream position, and the
// surrounding token window with this feature's activation per token.
struct ContextEntry {
  float peak = 0;
  std::int64_t position = 0;  // row index of the peak token
  std::vector<std::string> tokens;
  std::vector<float> activations;
};

// Fixed-capacity set of the most activating contexts for one feature,
// sorted by (activation desc, position asc).
struct TopContexts {
  std::uint32_t feature = 0;
  std::vector<ContextEntry> entries;
  bool never_fired() const { return entries.empty(); }
};

// Scans an in-memory activation stream with aligned token strings and
// keeps, per tracked feature, the `capacity` highest-activation contexts
// with `window` tokens of surrounding text on each side. Order-insensitive:
// ties resolve toward the earliest position.
std::vector<TopContexts> track_top_contexts(
    const SaeConfig& config, const SaeParams<float>& params, const NormFactors& norm,
    bool norm_folded, const Mat<float>& activations,
    const std::vector<std::uint8_t>& valid, const std::vector<std::string>& tokens,
    const std::vector<std::uint32_t>& features, int capacity = 20, int window = 25);

// Uniform sample of feature ids without replacement.
std::vector<std::uint32_t> sample_features(int n_features, int n_sampled,
                                           std::uint64_t seed);

// Renders the scoring prompt: the fixed rubric preamble, then one
// <START>/<END> block per context with a "token<TAB>activation" line per
// token, activations printed with one decimal place.
std::string build_prompt(const TopContexts& contexts);

struct ApiClientConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/chat/completions
  std::string model = "gpt-4o";
  double temperature = 0.0;
  int max_attempts = 3;
  int backoff_ms = 250;  // doubled per retry
  int timeout_s = 60;
  // Credential read from this environment variable when present.
  std::string api_key_env = "SAE_INTERP_API_KEY";
};

struct MonoScore {
  std::uint32_t feature = 0;
  int score = 0;  // 1..5
  std::string raw_response;
  std::string model;
};

// First integer in [1,5] found in a chat-completion response (or a raw
// body). Throws ScoringError when no such integer exists.
int parse_score(const std::string& text);

// POSTs the prompt to a chat-completion-style JSON endpoint and parses the
// score. Transient failures retry with exponential backoff; transport
// failure after the final attempt raises TransportError.
MonoScore score_feature(const ApiClientConfig& config, std::uint32_t feature,
                        const std::string& prompt);

// Scores many prompts with up to `max_in_flight` concurrent requests.
// Failed requests surface as score 0 with the error text in raw_response.
std::vector<MonoScore> score_features(const ApiClientConfig& config,
                                      const std::vector<std::uint32_t>& features,
                                      const std::vector<std::string>& prompts,
                                      int max_in_flight = 4);

// Counts per rubric level 1..5 (index 0 = level 1).
std::array<std::int64_t, 5> score_histogram(const std::vector<MonoScore>& scores);

}  // namespace sae
