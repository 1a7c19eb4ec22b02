#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "omega/error.hpp"

namespace omega::data {

/// A context normalized to [0,1] with the affine map needed to undo it.
struct ContextWindow {
  std::vector<double> values;
  double norm_min = 0.0;
  double norm_max = 0.0;
  std::size_t source_offset = 0;

  bool constant() const noexcept { return norm_max == norm_min; }

  /// Applies this window's map to any value in source units. Constant
  /// windows send everything to the midpoint.
  double apply(double x) const noexcept {
    if (constant()) return 0.5;
    return (x - norm_min) / (norm_max - norm_min);
  }
};

inline ContextWindow minmax_normalize(std::span<const double> window,
                                      std::size_t source_offset = 0) {
  if (window.empty()) throw EmptySeriesError("cannot normalize an empty window");
  for (std::size_t i = 0; i < window.size(); ++i) {
    if (!std::isfinite(window[i])) {
      throw NumericError("non-finite sample at window index " + std::to_string(i));
    }
  }
  const auto [lo, hi] = std::minmax_element(window.begin(), window.end());
  ContextWindow out;
  out.norm_min = *lo;
  out.norm_max = *hi;
  out.source_offset = source_offset;
  out.values.resize(window.size());
  for (std::size_t i = 0; i < window.size(); ++i) out.values[i] = out.apply(window[i]);
  return out;
}

inline std::vector<double> denormalize(std::span<const double> values,
                                       const ContextWindow& window) {
  std::vector<double> out(values.size());
  const double range = window.norm_max - window.norm_min;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = window.constant() ? window.norm_min : values[i] * range + window.norm_min;
  }
  return out;
}

/// n equal-length, non-overlapping patches stored contiguously.
class PatchSequence {
 public:
  PatchSequence(std::vector<double> flat, std::size_t l_patch)
      : flat_(std::move(flat)), l_patch_(l_patch) {}

  std::size_t count() const noexcept { return flat_.size() / l_patch_; }
  std::size_t patch_length() const noexcept { return l_patch_; }
  std::span<const double> patch(std::size_t k) const {
    return std::span<const double>(flat_).subspan(k * l_patch_, l_patch_);
  }
  std::span<const double> flat() const noexcept { return flat_; }

 private:
  std::vector<double> flat_;
  std::size_t l_patch_;
};

inline PatchSequence segment_patches(const ContextWindow& window, std::size_t l_patch) {
  const std::size_t W = window.values.size();
  if (l_patch == 0) throw ValidationError("patch length must be positive");
  if (W == 0 || W % l_patch != 0) {
    throw DivisibilityError("window length " + std::to_string(W) +
                            " is not a multiple of patch length " + std::to_string(l_patch) +
                            "; trim the oldest " + std::to_string(W % l_patch) +
                            " samples before patching");
  }
  return PatchSequence(window.values, l_patch);
}

struct WindowIndex {
  std::size_t context_begin;
  std::size_t target_begin;

  friend bool operator==(const WindowIndex&, const WindowIndex&) = default;
};

/// Windows at offsets 0, S, 2S, ... whose context of length W is followed by
/// a full horizon of length H.
inline std::vector<WindowIndex> sliding_windows(std::size_t length, std::size_t W,
                                                std::size_t H, std::size_t S) {
  if (W == 0 || H == 0 || S == 0) {
    throw ValidationError("window, horizon and stride must be positive");
  }
  if (length < W + H) {
    throw InsufficientDataError("series of length " + std::to_string(length) +
                                    " is shorter than the required minimum " +
                                    std::to_string(W + H),
                                W + H);
  }
  const std::size_t count = (length - W - H) / S + 1;
  std::vector<WindowIndex> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({i * S, i * S + W});
  return out;
}

}  // namespace omega::data
