// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "sae/commands.hpp"

namespace {

void add_synth_flags(CLI::App* cmd, sae::RunConfig& rc) {
  cmd->add_option("--synth-g", rc.synth_g, "synthetic dictionary size G");
  cmd->add_option("--synth-fire-prob", rc.synth_fire_prob, "per-feature fire probability");
  cmd->add_option("--synth-noise-sigma", rc.synth_noise_sigma, "additive noise sigma");
  cmd->add_option("--synth-mag", rc.synth_mag, "magnitude dist: uniform:lo:hi | exp:rate");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saekit: train, post-process, evaluate and analyze sparse autoencoders"};
  app.require_subcommand(1);

  // gen-synthetic ------------------------------------------------------
  sae::GenSynthOptions gen;
  auto* cgen = app.add_subcommand("gen-synthetic",
                                  "write a synthetic activation file plus its ground-truth dictionary");
  cgen->add_option("--out", gen.out, "output directory")->required();
  cgen->add_option("--tokens", gen.tokens, "rows to generate");
  cgen->add_option("--d", gen.d_model, "activation dimension D");
  cgen->add_option("--g", gen.g, "dictionary size G (> D)");
  cgen->add_option("--fire-prob", gen.fire_prob, "per-feature fire probability");
  cgen->add_option("--noise-sigma", gen.noise_sigma, "additive noise sigma");
  cgen->add_option("--mag", gen.magnitude, "magnitude dist: uniform:lo:hi | exp:rate");
  cgen->add_option("--seed", gen.seed, "rng seed");
  cgen->add_option("--label", gen.label, "position label stored in the header");
  cgen->add_option("--doc-len", gen.doc_len, "mark every doc-len-th row as a boundary");
  cgen->add_flag("--transcoder", gen.transcoder, "also write a paired target file");
  cgen->add_flag("--emit-text", gen.emit_text, "write a token-text sidecar");

  // train ---------------------------------------------------------------
  std::string train_config;
  sae::RunConfig rc;
  std::optional<std::string> o_seed, o_out, o_source, o_variant, o_pos;
  std::optional<std::int64_t> o_tokens;
  std::optional<int> o_k;
  std::optional<double> o_expansion;
  auto* ctrain = app.add_subcommand("train", "train an SAE from a run config");
  ctrain->add_option("--config", train_config, "key=value run config file");
  ctrain->add_option("--seed", o_seed, "override: rng seed");
  ctrain->add_option("--out", o_out, "override: output directory");
  ctrain->add_option("--source", o_source, "override: synthetic | activations.actv");
  ctrain->add_option("--tokens", o_tokens, "override: total training tokens");
  ctrain->add_option("--k", o_k, "override: sparsity target K");
  ctrain->add_option("--expansion", o_expansion, "override: F/D expansion factor");
  ctrain->add_option("--variant", o_variant, "override: vanilla|topk");
  ctrain->add_option("--position-kind", o_pos, "override: sae|transcoder");

  // postprocess ----------------------------------------------------------
  sae::PostprocessOptions post;
  auto* cpost = app.add_subcommand("postprocess",
                                   "fold normalization, unitize the decoder, optionally calibrate a JumpReLU threshold");
  cpost->add_option("--checkpoint", post.checkpoint, "input .saef")->required();
  cpost->add_option("--out", post.out, "output directory")->required();
  cpost->add_option("--source", post.source, "calibration source: synthetic | .actv");
  cpost->add_option("--tokens", post.tokens, "calibration tokens");
  cpost->add_option("--seed", post.seed, "held-out stream seed");
  cpost->add_flag("--calibrate", post.calibrate, "calibrate mean-L0=K threshold");
  add_synth_flags(cpost, post.synth);

  // eval -----------------------------------------------------------------
  sae::EvalOptions ev;
  std::string ev_out;
  auto* ceval = app.add_subcommand("eval", "L0 / EV / MSE / delta-loss report");
  ceval->add_option("--checkpoint", ev.checkpoint, "input .saef")->required();
  ceval->add_option("--source", ev.source, "synthetic | .actv")->required();
  ceval->add_option("--target-source", ev.target_source, "paired target .actv");
  ceval->add_option("--tokens", ev.tokens, "tokens to evaluate");
  ceval->add_option("--out", ev_out, "directory for eval.records");
  ceval->add_option("--seed", ev.seed, "synthetic stream seed");
  ceval->add_flag("--firing", ev.firing, "append firing-frequency diagnostics");
  ceval->add_flag("!--no-delta", ev.delta, "skip the toy-readout delta loss");
  add_synth_flags(ceval, ev.synth);

  // geometry ---------------------------------------------------------------
  sae::GeometryOptions geo;
  std::vector<double> jl_fd;
  auto* cgeo = app.add_subcommand("geometry", "decoder-space analysis");
  cgeo->add_option("--jl", jl_fd, "JL threshold for F D")->expected(2);
  cgeo->add_flag("--random-baseline", geo.random_baseline,
                 "empirical max pairwise cosine of F random unit vectors");
  cgeo->add_option("--f", geo.f, "feature count for --random-baseline");
  cgeo->add_option("--d", geo.d, "dimension for --random-baseline");
  cgeo->add_option("--seed", geo.seed, "rng seed");
  cgeo->add_option("--block", geo.block, "similarity matmul block size");
  cgeo->add_option("--checkpoint", geo.checkpoint, "first .saef");
  cgeo->add_option("--second", geo.second, "second .saef");
  std::optional<int> neighbor;
  cgeo->add_option("--neighbors", neighbor, "query feature id for nearest features");
  cgeo->add_option("--m", geo.m, "neighbor count");
  cgeo->add_flag("--matching-cdf", geo.matching_cdf,
                 "per-feature max-cosine CDF vs a random baseline");
  std::string geo_out;
  cgeo->add_option("--out", geo_out, "also write records to this directory");

  // interp -------------------------------------------------------------------
  sae::InterpOptions in;
  auto* cinterp = app.add_subcommand("interp",
                                     "top-activating contexts, scoring prompts, optional remote scoring");
  cinterp->add_option("--checkpoint", in.checkpoint, "input .saef")->required();
  cinterp->add_option("--source", in.source, "activations .actv")->required();
  cinterp->add_option("--text", in.text, "token-text sidecar .actt")->required();
  cinterp->add_option("--out", in.out, "output directory")->required();
  cinterp->add_option("--features", in.n_features, "features to sample");
  cinterp->add_option("--capacity", in.capacity, "contexts kept per feature");
  cinterp->add_option("--window", in.window, "context tokens each side");
  cinterp->add_option("--seed", in.seed, "sampling seed");
  cinterp->add_flag("--score", in.score, "send prompts to the scoring endpoint");
  cinterp->add_option("--endpoint", in.api.endpoint, "chat-completion endpoint URL");
  cinterp->add_option("--model", in.api.model, "model name");
  cinterp->add_option("--in-flight", in.max_in_flight, "max concurrent requests");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cgen->parsed()) {
      const auto r = sae::cmd_gen_synthetic(gen);
      std::cout << "activations\t" << r.activations_path << '\n';
      std::cout << "dictionary\t" << r.dictionary_path << '\n';
      if (!r.targets_path.empty()) std::cout << "targets\t" << r.targets_path << '\n';
      if (!r.text_path.empty()) std::cout << "text\t" << r.text_path << '\n';
    } else if (ctrain->parsed()) {
      if (!train_config.empty()) rc = sae::parse_run_config(train_config);
      if (o_seed) rc.seed = std::stoull(*o_seed);
      if (o_out) rc.out = *o_out;
      if (o_source) rc.source = *o_source;
      if (o_tokens) rc.tokens = *o_tokens;
      if (o_k) rc.k = *o_k;
      if (o_expansion) {
        rc.expansion = *o_expansion;
        rc.n_features.reset();
      }
      if (o_variant) rc.variant = sae::variant_from_string(*o_variant);
      if (o_pos) rc.position_kind = sae::position_kind_from_string(*o_pos);
      const auto r = sae::cmd_train(rc);
      std::cout << "checkpoint\t" << r.checkpoint_path << '\n';
      std::cout << "history\t" << r.history_path << '\n';
    } else if (cpost->parsed()) {
      if (post.calibrate && post.source.empty())
        throw sae::ConfigError("--calibrate requires --source");
      std::cout << "checkpoint\t" << sae::cmd_postprocess(post) << '\n';
    } else if (ceval->parsed()) {
      if (!ev_out.empty()) ev.out = ev_out;
      sae::cmd_eval(ev);
    } else if (cgeo->parsed()) {
      if (jl_fd.size() == 2) geo.jl = {jl_fd[0], jl_fd[1]};
      geo.neighbor_feature = neighbor;
      if (!geo_out.empty()) geo.out = geo_out;
      std::ostringstream records;
      sae::cmd_geometry(geo, records);
      std::cout << records.str();
      if (geo.out) {
        std::filesystem::create_directories(*geo.out);
        std::ofstream os(*geo.out + "/geometry.records");
        os << records.str();
      }
    } else if (cinterp->parsed()) {
      const auto r = sae::cmd_interp(in);
      std::cout << "prompts\t" << r.prompt_paths.size() << '\n';
      if (!r.scores_path.empty()) std::cout << "scores\t" << r.scores_path << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error\t" << e.what() << std::endl;
    return 1;
  }
  return 0;
}
