#pragma once

#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "omega/eval/evaluate.hpp"
#include "omega/eval/split.hpp"
#include "omega/train/loop.hpp"

namespace omega::eval {

/// "b 50% lower than a" style comparison of two MSEs, percentages in %.4g.
inline std::string relative_delta(std::string_view a_name, double a, std::string_view b_name,
                                  double b) {
  const std::string an(a_name), bn(b_name);
  if (a == b) return bn + " equal to " + an;
  if (a == 0.0) return bn + " higher than " + an + " (" + an + " is zero)";
  const double pct = (a - b) / a * 100.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", std::abs(pct));
  return bn + ' ' + buf + "% " + (pct > 0 ? "lower" : "higher") + " than " + an;
}

struct CompareConfig {
  Task task = Task::forecast;
  std::size_t window = 1024;
  std::size_t horizon = 128;
  std::size_t stride = 128;
  train::TrainConfig train;  // target_mode is set per leg
  EvalOptions eval;
  /// Called with a phase name before each stage; lets callers attribute reads.
  std::function<void(std::string_view)> on_phase;
};

struct CompareResult {
  std::optional<EvalReport> zero_shot;
  std::optional<EvalReport> fine_tuned;
  std::optional<EvalReport> target_trained;
  std::optional<model::ModelParams<float>> fine_tuned_params;
  std::optional<model::ModelParams<float>> target_trained_params;
  train::TrainReport fine_tune_training;
  train::TrainReport target_training;
  bool partial = false;
  std::string failed_leg;
  std::exception_ptr error;

  std::vector<std::string> summary() const {
    std::vector<std::string> lines;
    const std::pair<const char*, const std::optional<EvalReport>*> legs[] = {
        {"zero_shot", &zero_shot}, {"fine_tuned", &fine_tuned}, {"target_trained", &target_trained}};
    for (const auto& [name, r] : legs) {
      lines.push_back(std::string(name) + " mean_mse=" +
                      (*r ? data::detail::format_double((*r)->mean_mse) : std::string("missing")));
    }
    auto delta = [&](const char* an, const std::optional<EvalReport>& a, const char* bn,
                     const std::optional<EvalReport>& b) {
      if (a && b) lines.push_back(relative_delta(an, a->mean_mse, bn, b->mean_mse));
    };
    delta("fine_tuned", fine_tuned, "zero_shot", zero_shot);
    delta("target_trained", target_trained, "zero_shot", zero_shot);
    delta("target_trained", target_trained, "fine_tuned", fine_tuned);
    if (partial) lines.push_back("partial: " + failed_leg + " leg failed");
    return lines;
  }
};

/// Zero-shot, fine-tuned and target-trained scores on the most recent 10% of
/// `target`. Training legs read only the earliest 80% and select the
/// snapshot with the best mean MSE on the middle 10%. A failing leg stops the
/// comparison; completed reports are kept and the result is flagged partial.
inline CompareResult three_way_compare(const model::ModelParams<float>& pretrained,
                                       const data::SeriesView& target, const CompareConfig& cfg) {
  const std::size_t W = cfg.window, H = cfg.horizon, S = cfg.stride;
  require_geometry(pretrained.config, W, H);
  cfg.train.validate();
  const Split split = split_series(target, W, H);
  const std::vector<data::SeriesView> train_pool{split.train};
  auto phase = [&](std::string_view p) {
    if (cfg.on_phase) cfg.on_phase(p);
  };
  auto validator = [&](const model::ModelParams<float>& p) {
    return evaluate(model_predictor(p), split.validation, cfg.task, W, H, S, cfg.eval).mean_mse;
  };
  auto scored = [&](const model::ModelParams<float>& p, Variant v) {
    EvalReport r = evaluate(model_predictor(p), split.test, cfg.task, W, H, S, cfg.eval);
    r.variant = v;
    return r;
  };

  CompareResult out;
  const char* leg = "zero_shot";
  try {
    phase("zero_shot_eval");
    out.zero_shot = scored(pretrained, Variant::zero_shot);

    leg = "fine_tuned";
    phase("fine_tune");
    train::TrainConfig ft = cfg.train;
    ft.target_mode = cfg.task == Task::forecast ? train::TargetMode::finetune_forecast
                                                : train::TargetMode::finetune_reconstruct;
    model::ModelParams<float> tuned = pretrained;
    out.fine_tune_training = train::finetune(tuned, train_pool, ft, {validator, {}});
    phase("fine_tuned_eval");
    out.fine_tuned = scored(tuned, Variant::fine_tuned);
    out.fine_tuned_params = std::move(tuned);

    leg = "target_trained";
    phase("target_train");
    train::TrainConfig tt = cfg.train;
    tt.target_mode = train::TargetMode::target_train;
    auto fresh = train::pretrain(train_pool, pretrained.config, tt, {validator, {}});
    out.target_training = std::move(fresh.report);
    phase("target_trained_eval");
    out.target_trained = scored(fresh.params, Variant::target_trained);
    out.target_trained_params = std::move(fresh.params);
  } catch (...) {
    out.partial = true;
    out.failed_leg = leg;
    out.error = std::current_exception();
  }
  return out;
}

}  // namespace omega::eval
