// SPDX-License-Identifier: Apache-2.0
#include "sae/autointerp.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace sae {

namespace {

// Scoring prompt scaffold; the per-sentence blocks are appended after it.
constexpr const char* kPromptPreamble =
    "We are analyzing the activation levels of features in a neural network,\n"
    "where each feature activates certain tokens in a text. Each token's\n"
    "activation value indicates its relevance to the feature, with higher\n"
    "values showing stronger association. Your task is to give this feature\n"
    "a  monosemanticity score based on the following scoring rubric:\n"
    "\n"
    "Activation Consistency\n"
    "\n"
    "5: Clear pattern with no deviating examples\n"
    "\n"
    "4: Clear pattern with one or two deviating examples\n"
    "\n"
    "3: Clear overall pattern but quite a few examples not fitting that\n"
    "pattern\n"
    "\n"
    "2: Broad consistent theme but lacking structure\n"
    "\n"
    "1: No discernible pattern\n"
    "\n"
    "Consider the following activations for a feature in the neural\n"
    "network. Activation values are non-negative, with higher values\n"
    "indicating a stronger connection between the token and the\n"
    "feature. You only need to return a number. It\n"
    "represents your score for feature monosemanticity.\n"
    "\n"
    "[Context]\n";

std::string format_activation(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", double(v));
  return buf;
}

void encode_raw(const SaeConfig& config, const SaeParams<float>& params,
                const NormFactors& norm, bool norm_folded, const Mat<float>& x,
                SparseRows<float>& codes) {
  if (norm_folded || norm.s_in == 1.0f) {
    encode_batch(config, params, x, codes);
    return;
  }
  Mat<float> scaled = x;
  scale(norm.s_in, scaled.data.data(), scaled.size());
  encode_batch(config, params, scaled, codes);
}

}  // namespace

std::vector<std::uint32_t> sample_features(int n_features, int n_sampled,
                                           std::uint64_t seed) {
  if (n_sampled < 1 || n_sampled > n_features)
    throw ContractError("sample_features: n_sampled out of range");
  std::vector<std::uint32_t> all(static_cast<std::size_t>(n_features));
  std::iota(all.begin(), all.end(), 0u);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n_sampled; ++i) {
    const std::size_t j =
        std::uniform_int_distribution<std::size_t>(std::size_t(i), all.size() - 1)(rng);
    std::swap(all[std::size_t(i)], all[j]);
  }
  all.resize(std::size_t(n_sampled));
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<TopContexts> track_top_contexts(
    const SaeConfig& config, const SaeParams<float>& params, const NormFactors& norm,
    bool norm_folded, const Mat<float>& activations,
    const std::vector<std::uint8_t>& valid, const std::vector<std::string>& tokens,
    const std::vector<std::uint32_t>& features, int capacity, int window) {
  params.check_dims(config);
  const std::size_t n = activations.rows;
  if (tokens.size() != n)
    throw ContractError("track_top_contexts: " + std::to_string(tokens.size()) +
                        " token strings for " + std::to_string(n) +
                        " activation rows (text sidecar misaligned or missing)");
  if (valid.size() != n)
    throw ContractError("track_top_contexts: valid mask length mismatch");
  if (capacity < 1 || window < 0)
    throw ContractError("track_top_contexts: bad capacity/window");

  SparseRows<float> codes;
  encode_raw(config, params, norm, norm_folded, activations, codes);

  // Feature id -> tracked slot.
  std::vector<std::int32_t> slot(std::size_t(config.n_features), -1);
  for (std::size_t s = 0; s < features.size(); ++s) {
    if (features[s] >= std::uint32_t(config.n_features))
      throw ContractError("track_top_contexts: feature id out of range");
    slot[features[s]] = std::int32_t(s);
  }

  std::vector<std::vector<std::pair<float, std::int64_t>>> candidates(features.size());
  for (std::size_t r = 0; r < n; ++r) {
    if (!valid[r]) continue;
    for (std::uint64_t q = codes.off[r]; q < codes.off[r + 1]; ++q) {
      const std::int32_t s = slot[codes.idx[q]];
      if (s >= 0)
        candidates[std::size_t(s)].emplace_back(codes.val[q], std::int64_t(r));
    }
  }

  std::vector<TopContexts> out(features.size());
  for (std::size_t s = 0; s < features.size(); ++s) {
    out[s].feature = features[s];
    auto& cand = candidates[s];
    const auto better = [](const std::pair<float, std::int64_t>& a,
                           const std::pair<float, std::int64_t>& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    };
    const std::size_t keep = std::min<std::size_t>(std::size_t(capacity), cand.size());
    std::partial_sort(cand.begin(), cand.begin() + keep, cand.end(), better);
    for (std::size_t e = 0; e < keep; ++e) {
      ContextEntry entry;
      entry.peak = cand[e].first;
      entry.position = cand[e].second;
      const std::int64_t lo = std::max<std::int64_t>(0, entry.position - window);
      const std::int64_t hi =
          std::min<std::int64_t>(std::int64_t(n) - 1, entry.position + window);
      for (std::int64_t r = lo; r <= hi; ++r) {
        entry.tokens.push_back(tokens[std::size_t(r)]);
        entry.activations.push_back(codes.at(std::size_t(r), features[s]));
      }
      out[s].entries.push_back(std::move(entry));
    }
  }
  return out;
}

std::string build_prompt(const TopContexts& contexts) {
  if (contexts.entries.empty())
    throw ContractError("build_prompt: feature " + std::to_string(contexts.feature) +
                        " has no contexts (never fired)");
  std::string out = kPromptPreamble;
  for (std::size_t c = 0; c < contexts.entries.size(); ++c) {
    const ContextEntry& e = contexts.entries[c];
    out += "Sentence " + std::to_string(c + 1) + ": \n<START>\n";
    for (std::size_t t = 0; t < e.tokens.size(); ++t)
      out += e.tokens[t] + "\t" + format_activation(e.activations[t]) + "\n";
    out += "<END>\n";
  }
  return out;
}

int parse_score(const std::string& text) {
  for (std::size_t i = 0; i < text.size();) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    long value = 0;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
      if (value < 1000000) value = value * 10 + (text[j] - '0');
      ++j;
    }
    if (value >= 1 && value <= 5) return int(value);
    i = j;
  }
  throw ScoringError("no integer in [1,5] in response", text);
}

namespace {

struct ParsedUrl {
  bool https = false;
  std::string host;
  int port = 0;
  std::string path = "/";
};

ParsedUrl parse_url(const std::string& url) {
  ParsedUrl p;
  std::string rest;
  if (url.rfind("https://", 0) == 0) {
    p.https = true;
    rest = url.substr(8);
  } else if (url.rfind("http://", 0) == 0) {
    rest = url.substr(7);
  } else {
    throw ContractError("endpoint must start with http:// or https://: " + url);
  }
  const std::size_t slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  if (slash != std::string::npos) p.path = rest.substr(slash);
  const std::size_t colon = hostport.find(':');
  if (colon != std::string::npos) {
    p.host = hostport.substr(0, colon);
    p.port = std::stoi(hostport.substr(colon + 1));
  } else {
    p.host = hostport;
    p.port = p.https ? 443 : 80;
  }
  return p;
}

std::string extract_text(const std::string& body) {
  // Chat-completion shape first; anything else is treated as raw text.
  const auto parsed = nlohmann::json::parse(body, nullptr, false);
  if (!parsed.is_discarded()) {
    if (parsed.contains("choices") && parsed["choices"].is_array() &&
        !parsed["choices"].empty()) {
      const auto& choice = parsed["choices"][0];
      if (choice.contains("message") && choice["message"].contains("content"))
        return choice["message"]["content"].get<std::string>();
      if (choice.contains("text")) return choice["text"].get<std::string>();
    }
  }
  return body;
}

}  // namespace

MonoScore score_feature(const ApiClientConfig& config, std::uint32_t feature,
                        const std::string& prompt) {
  const ParsedUrl url = parse_url(config.endpoint);

  nlohmann::json body = {
      {"model", config.model},
      {"temperature", config.temperature},
      {"messages", {{{"role", "user"}, {"content", prompt}}}},
  };
  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  std::string last_error;
  int backoff = config.backoff_ms;
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    httplib::Result res;
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
    if (url.https) {
      httplib::SSLClient cli(url.host, url.port);
      cli.set_read_timeout(config.timeout_s, 0);
      res = cli.Post(url.path, headers, body.dump(), "application/json");
    } else
#endif
    {
      httplib::Client cli(url.host, url.port);
      cli.set_read_timeout(config.timeout_s, 0);
      res = cli.Post(url.path, headers, body.dump(), "application/json");
    }

    if (res && res->status >= 200 && res->status < 300) {
      const std::string text = extract_text(res->body);
      MonoScore score;
      score.feature = feature;
      score.score = parse_score(text);
      score.raw_response = text;
      score.model = config.model;
      return score;
    }
    if (res && res->status >= 400 && res->status < 500 && res->status != 429)
      throw TransportError("scoring endpoint returned HTTP " +
                           std::to_string(res->status));
    last_error = res ? "HTTP " + std::to_string(res->status)
                     : "connection error " + httplib::to_string(res.error());
    if (attempt < config.max_attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  throw TransportError("scoring failed after " + std::to_string(config.max_attempts) +
                       " attempts: " + last_error);
}

std::vector<MonoScore> score_features(const ApiClientConfig& config,
                                      const std::vector<std::uint32_t>& features,
                                      const std::vector<std::string>& prompts,
                                      int max_in_flight) {
  if (features.size() != prompts.size())
    throw ContractError("score_features: feature/prompt count mismatch");
  std::vector<MonoScore> scores(features.size());
  std::atomic<std::size_t> cursor{0};
  const int n_workers =
      int(std::min<std::size_t>(std::size_t(std::max(1, max_in_flight)),
                                features.size()));
  std::vector<std::thread> workers;
  workers.reserve(std::size_t(n_workers));
  for (int w = 0; w < n_workers; ++w) {
    workers.emplace_back([&]() {
      while (true) {
        const std::size_t i = cursor.fetch_add(1);
        if (i >= features.size()) return;
        try {
          scores[i] = score_feature(config, features[i], prompts[i]);
        } catch (const std::exception& e) {
          scores[i] = MonoScore{features[i], 0, e.what(), config.model};
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  return scores;
}

std::array<std::int64_t, 5> score_histogram(const std::vector<MonoScore>& scores) {
  std::array<std::int64_t, 5> hist{};
  for (const auto& s : scores)
    if (s.score >= 1 && s.score <= 5) ++hist[std::size_t(s.score - 1)];
  return hist;
}

}  // namespace sae
