#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "omega/data/series.hpp"
#include "omega/error.hpp"

namespace omega::data {

namespace detail {

// Mean taken relative to the first element so that a constant block
// averages to exactly that constant.
inline double block_mean(std::span<const double> xs) {
  const double ref = xs.front();
  double acc = 0.0;
  for (double x : xs) acc += x - ref;
  return ref + acc / static_cast<double>(xs.size());
}

}  // namespace detail

/// Block-average decimation followed by a centered moving average whose
/// window shrinks symmetrically at the edges.
inline TimeSeries preprocess_slow_signal(const TimeSeries& series, double target_hz,
                                         std::size_t smooth_width) {
  if (!series.sampling_rate_hz) {
    throw RateError("series '" + series.id + "' has no sampling rate");
  }
  const double rate = *series.sampling_rate_hz;
  if (!(target_hz > 0.0) || rate < target_hz) {
    throw RateError("target rate must be positive and not exceed the source rate " +
                    std::to_string(rate));
  }
  const double ratio = rate / target_hz;
  const double factor_r = std::round(ratio);
  if (std::abs(ratio - factor_r) > 1e-9 * ratio) {
    throw RateError("decimation factor " + std::to_string(ratio) + " is not an integer");
  }
  if (smooth_width == 0 || smooth_width % 2 == 0) {
    throw ValidationError("smoothing width must be a positive odd number");
  }
  const auto factor = static_cast<std::size_t>(factor_r);
  const std::size_t n = series.values.size() / factor;
  if (n == 0) throw InsufficientDataError("series shorter than one decimation block", factor);

  std::vector<double> decimated(n);
  for (std::size_t i = 0; i < n; ++i) {
    decimated[i] = detail::block_mean(
        std::span<const double>(series.values).subspan(i * factor, factor));
  }
  TimeSeries out;
  out.id = series.id;
  out.units = series.units;
  out.sampling_rate_hz = target_hz;
  out.values.resize(n);
  const std::size_t half = smooth_width / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = std::min({half, i, n - 1 - i});
    out.values[i] =
        detail::block_mean(std::span<const double>(decimated).subspan(i - h, 2 * h + 1));
  }
  return out;
}

}  // namespace omega::data
