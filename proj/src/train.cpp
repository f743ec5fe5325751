// SPDX-License-Identifier: Apache-2.0
#include "sae/train.hpp"

namespace sae {

TrainResult train(const SaeConfig& config, const TrainSchedule& schedule,
                  ActivationSource& source, std::uint64_t seed,
                  const TrainOptions& options) {
  config.validate();
  schedule.validate();
  if (config.variant == Variant::JumpRelu)
    throw ContractError("train: JumpReLU is an inference-only variant");
  if (source.d_model() != config.d_model)
    throw ContractError("train: source D " + std::to_string(source.d_model()) +
                        " != config d_model " + std::to_string(config.d_model));
  if (config.position_kind == PositionKind::Transcoder && !source.has_targets())
    throw ContractError("train: transcoder config needs a source with targets");

  TrainResult result;
  result.params = init_params<float>(config, seed);
  result.adam = AdamState<float>::zeros_like(result.params);

  const std::size_t F = std::size_t(config.n_features);
  // last_fired[i] = token count when feature i last fired; -1 = never.
  std::vector<std::int64_t> last_fired(F, -1);
  std::int64_t tokens_seen = 0;

  ActivationBatch batch;
  for (std::int64_t step = 0; step < schedule.total_steps; ++step) {
    const std::size_t got =
        collect_rows(source, std::size_t(schedule.batch_size), batch);
    if (got < std::size_t(schedule.batch_size))
      throw DataExhaustedError(
          "train: source exhausted at step " + std::to_string(step) + " of " +
              std::to_string(schedule.total_steps),
          step);
    for (auto v : batch.valid)
      if (!v)
        throw ContractError("train: buffer delivered an invalid row; "
                            "sources feeding training must filter");

    apply_norm(batch, options.norm);
    const int k_eff = k_at(step, schedule, config);
    const double lr = lr_at(step, schedule);

    GradResult<float> gr;
    try {
      gr = gradients(config, result.params, batch, k_eff);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(std::string(e.what()) + " at step " +
                           std::to_string(step));
    }

    if (config.variant == Variant::Vanilla)
      project_decoder_grads(result.params, gr.grads);
    adam_step(result.adam, result.params, gr.grads, float(lr));
    if (config.variant == Variant::Vanilla) renormalize_decoder(result.params);

    tokens_seen += std::int64_t(got);
    for (std::size_t i = 0; i < F; ++i)
      if (gr.fired[i]) last_fired[i] = tokens_seen;

    const bool log_now = (options.log_every > 0 &&
                          step % options.log_every == 0) ||
                         step == schedule.total_steps - 1;
    if (log_now) {
      std::int64_t never = 0;
      for (std::size_t i = 0; i < F; ++i)
        if (last_fired[i] < 0 ||
            tokens_seen - last_fired[i] > options.dead_window_tokens)
          ++never;
      result.history.records.push_back(
          {step, lr, k_eff, gr.mse, gr.l0_mean, double(never) / double(F)});
    }
  }
  return result;
}

}  // namespace sae
