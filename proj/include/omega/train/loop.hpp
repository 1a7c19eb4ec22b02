#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "omega/data/batch.hpp"
#include "omega/data/csv.hpp"
#include "omega/data/series.hpp"
#include "omega/error.hpp"
#include "omega/model/forward.hpp"
#include "omega/model/params.hpp"
#include "omega/numerics/adamw.hpp"
#include "omega/train/config.hpp"
#include "omega/util/rng.hpp"

namespace omega::train {

using model::ModelConfig;
using model::ModelParams;
using numerics::Mode;
using numerics::NormKind;
using numerics::Tensor;

struct LossRecord {
  std::size_t step = 0;
  double total = 0.0;
  double forecast_mse = 0.0;
  double reconstruct_mse = 0.0;
};

struct ValidationRecord {
  std::size_t step = 0;
  double mse = 0.0;
};

struct TrainReport {
  std::vector<LossRecord> curve;
  std::vector<ValidationRecord> validation;
  std::optional<std::size_t> selected_step;  // set when a validator chose a snapshot
  std::size_t steps_run = 0;
};

/// Scores a parameter set on held-aside data; lower is better.
using Validator = std::function<double(const ModelParams<float>&)>;

struct TrainOptions {
  Validator validator;
  std::function<void(const LossRecord&)> on_step;
};

/// Which parts of the model a mode updates and how it weights the two losses.
struct TrainPlan {
  double forecast_weight = 0.6;
  double reconstruct_weight = 0.4;
  bool encoder = true;
  bool forecast_decoder = true;
  bool reconstruct_decoder = true;
};

inline TrainPlan plan_for(const TrainConfig& cfg) {
  switch (cfg.target_mode) {
    case TargetMode::finetune_forecast: return {1.0, 0.0, false, true, false};
    case TargetMode::finetune_reconstruct: return {0.0, 1.0, false, false, true};
    case TargetMode::pretrain:
    case TargetMode::target_train:
      break;
  }
  return {cfg.loss_weight_forecast, cfg.loss_weight_reconstruct(), true, true, true};
}

namespace detail {

/// Copies of every tensor a step may change (learnable and running stats).
struct Snapshot {
  std::vector<Tensor> tensors;

  static Snapshot take(const ModelParams<float>& p) {
    Snapshot s;
    model::visit_model(p, [&](const std::string&, const Tensor& t, model::TensorRole) {
      Tensor copy = t;
      copy.drop_grad();
      s.tensors.push_back(std::move(copy));
    });
    return s;
  }

  void restore(ModelParams<float>& p) const {
    std::size_t i = 0;
    model::visit_model(p, [&](const std::string&, Tensor& t, model::TensorRole) {
      t = tensors[i++];
    });
  }
};

inline std::vector<Tensor*> selected_tensors(ModelParams<float>& p, const TrainPlan& plan) {
  std::vector<Tensor*> out;
  auto append = [&](std::vector<Tensor*> part) { out.insert(out.end(), part.begin(), part.end()); };
  if (plan.encoder) append(model::trainable_tensors(p.encoder));
  if (plan.reconstruct_decoder) append(model::trainable_tensors(p.reconstruct));
  if (plan.forecast_decoder) append(model::trainable_tensors(p.forecast));
  return out;
}

}  // namespace detail

/// Runs cfg.steps optimizer steps over batches sampled from `pool`.
///
/// Each step samples a batch seeded by (cfg.seed, step), encodes it, runs both
/// decoders, and minimizes wf * forecast_mse + wr * reconstruct_mse with
/// AdamW. Frozen parts are bound as constants, so they receive no gradients
/// and, for the encoder, run in infer mode without touching running
/// statistics. With a validator the parameters are scored at step 0, every
/// eval_every steps and at the end; the best snapshot is restored on return.
/// A non-finite loss restores the last parameters that produced a finite
/// loss and throws DivergenceError.
inline TrainReport run_training(ModelParams<float>& params, std::span<const data::SeriesView> pool,
                                const TrainConfig& cfg, const TrainOptions& options = {}) {
  cfg.validate();
  const ModelConfig& mc = params.config;
  mc.validate();
  const TrainPlan plan = plan_for(cfg);
  const std::size_t W = mc.context_length(), H = mc.l_pred, B = cfg.batch_size;
  const Mode encoder_mode = plan.encoder ? Mode::train : Mode::infer;
  if (plan.encoder && mc.norm_kind == NormKind::batch && B < 2) {
    throw DegenerateBatchError("batch normalization training needs train.batch_size >= 2");
  }

  std::vector<Tensor*> trainable = detail::selected_tensors(params, plan);
  numerics::AdamWState<float> optimizer(cfg.optimizer(), trainable);
  TrainReport report;

  std::optional<detail::Snapshot> best;
  double best_score = 0.0;
  auto validate_at = [&](std::size_t step) {
    if (!options.validator) return;
    const double score = options.validator(params);
    report.validation.push_back({step, score});
    if (!best || score < best_score) {
      best_score = score;
      best = detail::Snapshot::take(params);
      report.selected_step = step;
    }
  };
  validate_at(0);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const data::Batch batch =
        data::make_batch(pool, B, W, H, mc.l_patch, util::mix_seed(cfg.seed, step));
    detail::Snapshot last_finite = detail::Snapshot::take(params);
    LossRecord rec{step, 0.0, 0.0, 0.0};
    numerics::Tape tape;
    try {
      const auto inputs = tape.constant_ref(batch.inputs);
      const model::Encoded<float> e =
          model::encode(tape, params.encoder, mc, inputs, B, encoder_mode, plan.encoder);
      const auto f = model::decode_forecast(tape, params.forecast, e.summary, plan.forecast_decoder);
      const auto r =
          model::decode_reconstruct(tape, params.reconstruct, e.summary, plan.reconstruct_decoder);
      const auto f_mse = numerics::mse(tape, f, tape.constant_ref(batch.forecast_targets));
      const auto r_mse = numerics::mse(tape, r, tape.constant_ref(batch.reconstruction_targets));
      const auto total = numerics::weighted_sum(tape, f_mse, plan.forecast_weight, r_mse,
                                                plan.reconstruct_weight);
      rec.forecast_mse = tape.value(f_mse).item();
      rec.reconstruct_mse = tape.value(r_mse).item();
      rec.total = tape.value(total).item();
      if (!std::isfinite(rec.total)) throw NumericError("non-finite training loss");
      tape.backward(total);
    } catch (const NumericError& e) {
      last_finite.restore(params);
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": " +
                                e.what() + "; parameters from step " + std::to_string(step - 1) +
                                " retained",
                            step);
    }
    numerics::adamw_step<float>(trainable, optimizer);
    for (Tensor* t : trainable) t->zero_grad();
    report.curve.push_back(rec);
    report.steps_run = step;
    if (options.on_step) options.on_step(rec);
    if (step % cfg.eval_every == 0 || step == cfg.steps) validate_at(step);
  }
  if (best) best->restore(params);
  for (Tensor* t : trainable) t->drop_grad();
  return report;
}

struct PretrainResult {
  ModelParams<float> params;
  TrainReport report;
};

/// Fresh model from `model_config.seed`, trained end to end on `pool`.
inline PretrainResult pretrain(std::span<const data::SeriesView> pool,
                               const ModelConfig& model_config, const TrainConfig& cfg,
                               const TrainOptions& options = {}) {
  if (is_finetune(cfg.target_mode)) {
    throw ConfigError("pretrain needs target_mode pretrain or target_train, got " +
                      std::string(to_string(cfg.target_mode)));
  }
  PretrainResult out{model::init_params<float>(model_config), {}};
  out.report = run_training(out.params, pool, cfg, options);
  return out;
}

/// Updates only the decoder selected by cfg.target_mode; the encoder and the
/// other decoder stay bitwise unchanged.
inline TrainReport finetune(ModelParams<float>& params, std::span<const data::SeriesView> pool,
                            const TrainConfig& cfg, const TrainOptions& options = {}) {
  if (!is_finetune(cfg.target_mode)) {
    throw ConfigError("finetune needs target_mode finetune_forecast or finetune_reconstruct, got " +
                      std::string(to_string(cfg.target_mode)));
  }
  return run_training(params, pool, cfg, options);
}

inline void write_loss_curve(const std::filesystem::path& path, std::span<const LossRecord> curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,total,forecast_mse,reconstruct_mse\n";
  for (const auto& r : curve) {
    out << r.step << ',' << data::detail::format_double(r.total) << ','
        << data::detail::format_double(r.forecast_mse) << ','
        << data::detail::format_double(r.reconstruct_mse) << '\n';
  }
}

}  // namespace omega::train
