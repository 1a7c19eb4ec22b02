#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "omega/data/series.hpp"
#include "omega/error.hpp"
#include "omega/util/rng.hpp"

namespace omega::synth {

/// Transducer m = quantize(clip(gain*q + offset + noise)).
struct SensorModel {
  double gain = 1.0;
  double offset = 0.0;
  double noise_std = 0.0;
  std::optional<int> quantization_bits;
  std::optional<std::pair<double, double>> clip_range;

  void validate() const {
    if (!std::isfinite(gain) || !std::isfinite(offset)) {
      throw ConfigError("sensor gain and offset must be finite");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
      throw ConfigError("sensor noise_std must be a finite non-negative value");
    }
    if (clip_range && !(clip_range->first < clip_range->second)) {
      throw ConfigError("sensor clip range must satisfy lo < hi");
    }
    if (quantization_bits) {
      if (*quantization_bits < 4 || *quantization_bits > 24) {
        throw ConfigError("quantization_bits must lie in [4, 24]");
      }
      if (!clip_range) throw ConfigError("quantization requires a clip range");
    }
  }
};

inline data::TimeSeries measure(const data::TimeSeries& q, const SensorModel& sensor,
                                std::uint64_t seed) {
  sensor.validate();
  q.validate();
  data::TimeSeries m = q;
  util::Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool noisy = sensor.noise_std > 0.0;
  double step = 0.0;
  if (sensor.quantization_bits) {
    const double levels = std::ldexp(1.0, *sensor.quantization_bits);
    step = (sensor.clip_range->second - sensor.clip_range->first) / (levels - 1.0);
  }
  for (double& v : m.values) {
    if (sensor.gain != 1.0) v *= sensor.gain;
    if (sensor.offset != 0.0) v += sensor.offset;
    if (noisy) v += sensor.noise_std * noise(rng);
    if (sensor.clip_range) v = std::clamp(v, sensor.clip_range->first, sensor.clip_range->second);
    if (sensor.quantization_bits) {
      const double lo = sensor.clip_range->first;
      v = lo + std::round((v - lo) / step) * step;
      v = std::min(v, sensor.clip_range->second);
    }
  }
  return m;
}

}  // namespace omega::synth
