// SPDX-License-Identifier: Apache-2.0
#include "sae/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "sae/activation_file.hpp"
#include "sae/buffer.hpp"
#include "sae/checkpoint.hpp"
#include "sae/geometry.hpp"
#include "sae/metrics.hpp"
#include "sae/train.hpp"

namespace fs = std::filesystem;

namespace sae {

namespace {

SyntheticDictionary dictionary_from(const RunConfig& rc, std::uint64_t seed) {
  return make_dictionary(rc.synth_g, rc.d_model, rc.synth_fire_prob, rc.magnitude(),
                         rc.synth_noise_sigma, seed);
}

void ensure_dir(const std::string& path) {
  if (!path.empty()) fs::create_directories(path);
}

}  // namespace

std::unique_ptr<ActivationSource> make_source(const std::string& spec,
                                              const RunConfig& rc, std::uint64_t seed,
                                              const std::string& target_spec) {
  if (spec == "synthetic") {
    std::optional<Mat<float>> out_dict;
    if (rc.position_kind == PositionKind::Transcoder) {
      // Target dictionary shares the codes but not the directions.
      SyntheticDictionary td = dictionary_from(rc, seed ^ 0x7455ULL);
      out_dict = std::move(td.ground_truth);
    }
    SyntheticDictionary dict = dictionary_from(rc, seed);
    return std::make_unique<SyntheticSource>(std::move(dict), std::move(out_dict),
                                             rc.label);
  }
  if (!target_spec.empty())
    return std::make_unique<FileSource>(spec, target_spec);
  return std::make_unique<FileSource>(spec);
}

GenSynthResult cmd_gen_synthetic(const GenSynthOptions& opt) {
  ensure_dir(opt.out);
  RunConfig rc;
  rc.d_model = opt.d_model;
  rc.synth_g = opt.g;
  rc.synth_fire_prob = opt.fire_prob;
  rc.synth_noise_sigma = opt.noise_sigma;
  rc.synth_mag = opt.magnitude;

  SyntheticDictionary dict = dictionary_from(rc, opt.seed);
  std::optional<Mat<float>> out_dict;
  if (opt.transcoder) {
    SyntheticDictionary td = dictionary_from(rc, opt.seed ^ 0x7455ULL);
    out_dict = td.ground_truth;
  }

  GenSynthResult result;
  result.dictionary_path = opt.out + "/dictionary.actv";
  {
    std::vector<std::uint8_t> all_valid(std::size_t(opt.g), 1);
    write_activation_file(result.dictionary_path, dict.ground_truth, all_valid,
                          ActDtype::F32,
                          {{"position", opt.label},
                           {"model", "synthetic"},
                           {"content", "dictionary"}});
  }

  SyntheticGenerator gen(dict, out_dict);
  result.activations_path = opt.out + "/activations.actv";
  ActivationFileWriter writer(result.activations_path, std::uint32_t(opt.d_model),
                              ActDtype::F32,
                              {{"position", opt.label}, {"model", "synthetic"}});
  std::unique_ptr<ActivationFileWriter> target_writer;
  if (opt.transcoder) {
    result.targets_path = opt.out + "/targets.actv";
    target_writer = std::make_unique<ActivationFileWriter>(
        result.targets_path, std::uint32_t(opt.d_model), ActDtype::F32,
        std::map<std::string, std::string>{{"position", opt.label + "TC"},
                                           {"model", "synthetic"}});
  }

  std::vector<std::string> tokens;
  SparseRows<float> codes;
  ActivationBatch batch;
  std::int64_t written = 0;
  while (written < opt.tokens) {
    const std::size_t n = std::size_t(std::min<std::int64_t>(opt.tokens - written, 8192));
    gen.sample(n, batch, opt.emit_text ? &codes : nullptr);
    for (std::size_t r = 0; r < n; ++r) {
      const std::int64_t row = written + std::int64_t(r);
      const bool boundary = opt.doc_len > 0 && row % opt.doc_len == 0;
      writer.append_row(batch.x_in.row(r), !boundary);
      if (target_writer) target_writer->append_row(batch.x_out->row(r), !boundary);
      if (opt.emit_text) {
        // Token text names the dominant planted feature, e.g. " g17".
        std::uint32_t best = 0;
        float best_v = -1;
        for (std::uint64_t q = codes.off[r]; q < codes.off[r + 1]; ++q)
          if (codes.val[q] > best_v) {
            best_v = codes.val[q];
            best = codes.idx[q];
          }
        tokens.push_back(boundary ? "<doc>"
                         : best_v < 0 ? " none"
                                      : " g" + std::to_string(best));
      }
    }
    written += std::int64_t(n);
  }
  writer.finalize();
  if (target_writer) target_writer->finalize();
  if (opt.emit_text) {
    result.text_path = opt.out + "/activations.actt";
    write_text_sidecar(result.text_path, tokens);
  }
  return result;
}

TrainOutputs cmd_train(const RunConfig& rc) {
  ensure_dir(rc.out);
  const SaeConfig config = rc.sae_config();
  const TrainSchedule schedule = rc.train_schedule();
  config.validate();
  schedule.validate();

  // Norm factors come from a fresh stream so training replays nothing.
  TrainOptions options;
  options.log_every = rc.log_every;
  {
    auto norm_src = make_source(rc.source, rc, rc.seed + 1, rc.target_source);
    options.norm = estimate_norm_factors(*norm_src, rc.norm_samples);
  }

  auto producer = make_source(rc.source, rc, rc.seed, rc.target_source);
  ShuffledSource buffer(*producer, std::size_t(rc.buffer_capacity), rc.seed);

  TrainResult tr = train(config, schedule, buffer, rc.seed, options);

  TrainOutputs out;
  out.name = sae_name(rc.label, config);
  out.checkpoint_path = rc.out + "/" + out.name + ".saef";
  Checkpoint ck;
  ck.config = config;
  ck.schedule = schedule;
  ck.params = std::move(tr.params);
  ck.adam = std::move(tr.adam);
  ck.step_count = schedule.total_steps;
  ck.norm = options.norm;
  ck.norm_folded = false;
  ck.label = out.name;
  save_checkpoint(out.checkpoint_path, ck);

  out.history_path = rc.out + "/history.tsv";
  std::ofstream hist(out.history_path);
  hist << "step\tlr\teffective_k\tmse\tl0_mean\tfraction_never_fired\n";
  hist << std::setprecision(10);
  for (const auto& r : tr.history.records)
    hist << r.step << '\t' << r.lr << '\t' << r.effective_k << '\t' << r.mse << '\t'
         << r.l0_mean << '\t' << r.fraction_never_fired << '\n';
  return out;
}

std::string cmd_postprocess(const PostprocessOptions& opt) {
  ensure_dir(opt.out);
  Checkpoint ck = load_checkpoint(opt.checkpoint);
  if (ck.norm_folded)
    throw ContractError("postprocess: checkpoint is already folded");

  ck.params = fold_norm_into_params(ck.params, ck.norm);
  ck.params = unitize_decoder(ck.params);
  ck.norm_folded = true;

  if (opt.calibrate) {
    RunConfig rc = opt.synth;
    auto source = make_source(opt.source, rc, opt.seed);
    calibrate_jumprelu(ck.config, ck.params, *source, ck.config.k, opt.tokens);
    ck.label = sae_name(ck.label.substr(0, ck.label.find('-')), ck.config);
  }

  std::string stem = fs::path(opt.checkpoint).stem().string();
  const std::string path = opt.out + "/" + stem + "-post.saef";
  ck.adam.reset();  // optimizer state is meaningless after the transforms
  save_checkpoint(path, ck);
  return path;
}

EvalReport cmd_eval(const EvalOptions& opt) {
  Checkpoint ck = load_checkpoint(opt.checkpoint);
  RunConfig rc = opt.synth;
  rc.d_model = ck.config.d_model;
  rc.position_kind = ck.config.position_kind;
  auto source = make_source(opt.source, rc, opt.seed, opt.target_source);

  std::optional<ToyReadout> toy;
  const DownstreamEvaluator* evaluator = nullptr;
  if (opt.delta) {
    toy.emplace(16, ck.config.d_model, 0xD0D0ULL);
    evaluator = &*toy;
  }
  const EvalReport report = evaluate(ck.config, ck.params, ck.norm, ck.norm_folded,
                                     *source, opt.tokens, evaluator);

  const std::string label = ck.label.empty() ? source->label() : ck.label;
  write_report_records(std::cout, report, label);
  std::optional<FiringStats> firing;
  if (opt.firing) {
    auto fsrc = make_source(opt.source, rc, opt.seed + 1, opt.target_source);
    firing = firing_stats(ck.config, ck.params, ck.norm, ck.norm_folded, *fsrc,
                          opt.tokens);
    write_firing_records(std::cout, *firing, label);
  }
  if (opt.out) {
    ensure_dir(*opt.out);
    std::ofstream os(*opt.out + "/eval.records");
    write_report_records(os, report, label);
    if (firing) write_firing_records(os, *firing, label);
  }
  return report;
}

void cmd_geometry(const GeometryOptions& opt, std::ostream& os) {
  if (opt.jl) {
    os << "jl_epsilon\t" << opt.jl->first << '\t' << opt.jl->second << '\t'
       << jl_epsilon(opt.jl->first, opt.jl->second) << '\n';
  }
  if (opt.random_baseline) {
    const double m = random_max_cosine(opt.f, opt.d, opt.seed, opt.block);
    os << "random_max_cosine\t" << opt.f << '\t' << opt.d << '\t' << m << '\n';
  }
  if (opt.neighbor_feature) {
    const Checkpoint a = load_checkpoint(opt.checkpoint);
    const Checkpoint b = opt.second.empty() ? a : load_checkpoint(opt.second);
    const SaeParams<float>& pb = opt.second.empty() ? a.params : b.params;
    const NeighborResult nr =
        nearest_features(a.params, *opt.neighbor_feature, pb, opt.m);
    const double eps = jl_epsilon(double(pb.n_features()), double(a.config.d_model));
    for (const auto& [j, cos] : nr.neighbors)
      os << "neighbor\t" << nr.query << '\t' << j << '\t' << cos << '\t'
         << (cos > eps ? "above_jl" : "below_jl") << '\n';
  }
  if (opt.matching_cdf) {
    const Checkpoint a = load_checkpoint(opt.checkpoint);
    const Checkpoint b = load_checkpoint(opt.second);
    const MatchingCdf cdf = cross_sae_matching_cdf(a.params, b.params, opt.seed);
    for (std::size_t i = 0; i < cdf.matched.size(); ++i)
      os << "matched_max_cos\t" << i << '\t' << cdf.matched[i] << '\n';
    for (std::size_t i = 0; i < cdf.random_baseline.size(); ++i)
      os << "random_baseline_max_cos\t" << i << '\t' << cdf.random_baseline[i] << '\n';
    os << "ks_statistic\t" << ks_statistic(cdf.matched, cdf.random_baseline) << '\n';
  }
}

InterpResult cmd_interp(const InterpOptions& opt) {
  ensure_dir(opt.out);
  const Checkpoint ck = load_checkpoint(opt.checkpoint);
  if (opt.text.empty())
    throw ContractError("interp: a text sidecar (--text) is required");

  Mat<float> acts;
  std::vector<std::uint8_t> valid;
  ActivationFileInfo info;
  load_activation_file(opt.source, acts, valid, &info);
  if (int(info.d) != ck.config.d_model)
    throw ContractError("interp: file D " + std::to_string(info.d) +
                        " != checkpoint d_model " + std::to_string(ck.config.d_model));
  const std::vector<std::string> tokens = read_text_sidecar(opt.text);

  const std::vector<std::uint32_t> features =
      sample_features(ck.config.n_features,
                      std::min(opt.n_features, ck.config.n_features), opt.seed);
  const std::vector<TopContexts> contexts =
      track_top_contexts(ck.config, ck.params, ck.norm, ck.norm_folded, acts, valid,
                         tokens, features, opt.capacity, opt.window);

  InterpResult result;
  std::vector<std::uint32_t> scored_features;
  std::vector<std::string> prompts;
  for (const auto& tc : contexts) {
    if (tc.never_fired()) {
      std::ofstream(opt.out + "/feature_" + std::to_string(tc.feature) +
                    ".never_fired")
          << "feature " << tc.feature << " never fired on this stream\n";
      continue;
    }
    const std::string prompt = build_prompt(tc);
    const std::string path =
        opt.out + "/feature_" + std::to_string(tc.feature) + ".prompt.txt";
    std::ofstream(path) << prompt;
    result.prompt_paths.push_back(path);
    scored_features.push_back(tc.feature);
    prompts.push_back(prompt);
  }

  if (opt.score) {
    result.scores = score_features(opt.api, scored_features, prompts,
                                   opt.max_in_flight);
    result.scores_path = opt.out + "/scores.tsv";
    std::ofstream os(result.scores_path);
    os << "feature\tscore\tmodel\n";
    for (const auto& s : result.scores)
      os << s.feature << '\t' << s.score << '\t' << s.model << '\n';
    const auto hist = score_histogram(result.scores);
    std::ofstream hs(opt.out + "/score_histogram.records");
    for (int level = 1; level <= 5; ++level)
      hs << "score_" << level << '\t' << hist[std::size_t(level - 1)] << '\n';
    std::int64_t total = 0;
    for (auto c : hist) total += c;
    hs << "fraction_score_1\t"
       << (total ? double(hist[0]) / double(total) : 0.0) << '\n';
  }
  return result;
}

}  // namespace sae
