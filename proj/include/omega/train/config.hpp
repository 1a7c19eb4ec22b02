#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "omega/error.hpp"
#include "omega/numerics/adamw.hpp"

namespace omega::train {

enum class TargetMode { pretrain, finetune_forecast, finetune_reconstruct, target_train };

inline const char* to_string(TargetMode m) {
  switch (m) {
    case TargetMode::pretrain: return "pretrain";
    case TargetMode::finetune_forecast: return "finetune_forecast";
    case TargetMode::finetune_reconstruct: return "finetune_reconstruct";
    case TargetMode::target_train: return "target_train";
  }
  return "unknown";
}

inline TargetMode parse_target_mode(std::string_view s) {
  for (auto m : {TargetMode::pretrain, TargetMode::finetune_forecast,
                 TargetMode::finetune_reconstruct, TargetMode::target_train}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown target mode '" + std::string(s) + "'");
}

inline bool is_finetune(TargetMode m) {
  return m == TargetMode::finetune_forecast || m == TargetMode::finetune_reconstruct;
}

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t steps = 2000;
  double loss_weight_forecast = 0.6;
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;
  TargetMode target_mode = TargetMode::pretrain;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  double loss_weight_reconstruct() const noexcept { return 1.0 - loss_weight_forecast; }

  numerics::AdamWConfig optimizer() const {
    return {.lr = lr, .beta1 = beta1, .beta2 = beta2, .eps = eps, .weight_decay = weight_decay};
  }

  void validate() const {
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (steps == 0) throw ConfigError("train.steps must be positive");
    if (eval_every == 0) throw ConfigError("train.eval_every must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and >= 0");
    if (!(loss_weight_forecast >= 0.0 && loss_weight_forecast <= 1.0)) {
      throw ConfigError("train.loss_weight_forecast must lie in [0, 1]");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("train.eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  }
};

}  // namespace omega::train
