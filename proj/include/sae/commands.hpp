// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sae/autointerp.hpp"
#include "sae/metrics.hpp"
#include "sae/runconfig.hpp"

namespace sae {

// Thin, deterministic compositions of module operations backing the CLI
// subcommands. Each returns the paths it wrote. Tests drive these directly.

struct GenSynthOptions {
  std::string out;
  std::int64_t tokens = 100000;
  int d_model = 64;
  int g = 256;
  float fire_prob = 5.0f / 256.0f;
  float noise_sigma = 0.01f;
  std::string magnitude = "uniform:0.5:2";
  std::uint64_t seed = 42;
  std::string label = "L0R";
  bool transcoder = false;   // also emit a paired target file
  bool emit_text = false;    // synthetic token-text sidecar
  std::int64_t doc_len = 0;  // >0: mark every doc_len-th row invalid (boundaries)
};

struct GenSynthResult {
  std::string activations_path;
  std::string dictionary_path;
  std::string targets_path;  // transcoder only
  std::string text_path;     // emit_text only
};

GenSynthResult cmd_gen_synthetic(const GenSynthOptions& opt);

struct TrainOutputs {
  std::string checkpoint_path;
  std::string history_path;
  std::string name;
};

TrainOutputs cmd_train(const RunConfig& rc);

struct PostprocessOptions {
  std::string checkpoint;
  std::string out;
  std::string source;        // for calibration; synthetic or .actv path
  bool calibrate = false;
  std::int64_t tokens = 50000;
  std::uint64_t seed = 43;   // synthetic held-out stream seed
  RunConfig synth;           // synthetic source parameters when used
};

std::string cmd_postprocess(const PostprocessOptions& opt);

struct EvalOptions {
  std::string checkpoint;
  std::string source;  // synthetic or .actv path
  std::string target_source;
  std::int64_t tokens = 100000;
  std::optional<std::string> out;  // records also written here when set
  bool delta = true;               // toy-readout delta loss
  bool firing = false;             // append firing diagnostics records
  std::uint64_t seed = 44;
  RunConfig synth;
};

EvalReport cmd_eval(const EvalOptions& opt);

struct GeometryOptions {
  std::optional<std::pair<double, double>> jl;  // (F, D)
  bool random_baseline = false;
  int f = 32768;
  int d = 4096;
  std::uint64_t seed = 0;
  int block = 512;
  std::string checkpoint;
  std::string second;
  std::optional<int> neighbor_feature;
  int m = 6;
  bool matching_cdf = false;
  std::optional<std::string> out;
};

void cmd_geometry(const GeometryOptions& opt, std::ostream& os);

struct InterpOptions {
  std::string checkpoint;
  std::string source;       // .actv path
  std::string text;         // .actt sidecar path
  std::string out;
  int n_features = 128;
  int capacity = 20;
  int window = 25;
  std::uint64_t seed = 45;
  bool score = false;
  ApiClientConfig api;
  int max_in_flight = 4;
};

struct InterpResult {
  std::vector<std::string> prompt_paths;
  std::string scores_path;  // when scoring ran
  std::vector<MonoScore> scores;
};

InterpResult cmd_interp(const InterpOptions& opt);

// Builds an eval/calibration source from a source spec ("synthetic" or an
// .actv path). The synthetic stream derives from (rc synth params, seed).
std::unique_ptr<ActivationSource> make_source(const std::string& spec,
                                              const RunConfig& rc,
                                              std::uint64_t seed,
                                              const std::string& target_spec = "");

}  // namespace sae
