#pragma once

#include <cstddef>
#include <string>

#include "omega/data/series.hpp"
#include "omega/error.hpp"

namespace omega::eval {

/// Chronological split: earliest 80% train, next 10% validation, latest 10% test.
struct SplitSpec {
  std::size_t train_percent = 80;
  std::size_t validation_percent = 10;

  std::size_t train_end(std::size_t length) const { return length * train_percent / 100; }
  std::size_t validation_end(std::size_t length) const {
    return length * (train_percent + validation_percent) / 100;
  }
};

struct Split {
  data::SeriesView train;
  data::SeriesView validation;
  data::SeriesView test;

  std::size_t train_end() const noexcept { return validation.begin(); }
  std::size_t validation_end() const noexcept { return test.begin(); }
};

/// Smallest series length that leaves room for one (W + H) window in every
/// segment.
inline std::size_t minimum_split_length(std::size_t W, std::size_t H) { return 10 * (W + H); }

inline Split split_series(const data::SeriesView& series, std::size_t W, std::size_t H,
                          const SplitSpec& spec = {}) {
  if (spec.train_percent + spec.validation_percent >= 100 || spec.train_percent == 0 ||
      spec.validation_percent == 0) {
    throw ConfigError("split percentages must leave non-empty train, validation and test parts");
  }
  const std::size_t L = series.size();
  const std::size_t minimum = minimum_split_length(W, H);
  if (L < minimum) {
    throw InsufficientDataError("series '" + series.id() + "' has " + std::to_string(L) +
                                    " samples; a train/validation/test split with W=" +
                                    std::to_string(W) + ", H=" + std::to_string(H) +
                                    " needs at least " + std::to_string(minimum),
                                minimum);
  }
  const std::size_t a = spec.train_end(L), b = spec.validation_end(L);
  return {series.subview(0, a), series.subview(a, b), series.subview(b, L)};
}

}  // namespace omega::eval
