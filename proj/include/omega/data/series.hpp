#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "omega/error.hpp"

namespace omega::data {

/// A raw measurement channel in sensor units.
struct TimeSeries {
  std::string id;
  std::optional<double> sampling_rate_hz;
  std::vector<double> values;
  std::optional<std::string> units;

  std::size_t size() const noexcept { return values.size(); }

  void validate() const {
    if (values.empty()) throw EmptySeriesError("series '" + id + "' is empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw NumericError("series '" + id + "' has a non-finite value at index " +
                           std::to_string(i));
      }
    }
    if (sampling_rate_hz && !(*sampling_rate_hz > 0.0)) {
      throw ValidationError("series '" + id + "' has a non-positive sampling rate");
    }
  }
};

/// Called with the absolute [begin, end) parent range of every read.
using ReadObserver = std::function<void(std::size_t begin, std::size_t end)>;

/// Read-only window onto a [begin, end) slice of a TimeSeries.
///
/// All sample access goes through read(), which reports the absolute range to
/// an optional observer; this lets callers audit exactly which samples a
/// training or evaluation pass touched.
class SeriesView {
 public:
  SeriesView(const TimeSeries& series)  // NOLINT(google-explicit-constructor)
      : series_(&series), begin_(0), end_(series.size()) {}

  SeriesView(const TimeSeries& series, std::size_t begin, std::size_t end,
             ReadObserver observer = {})
      : series_(&series), begin_(begin), end_(end), observer_(std::move(observer)) {
    if (begin > end || end > series.size()) {
      throw ValidationError("view [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") exceeds series of length " + std::to_string(series.size()));
    }
  }

  std::size_t size() const noexcept { return end_ - begin_; }
  std::size_t begin() const noexcept { return begin_; }
  std::size_t end() const noexcept { return end_; }
  const TimeSeries& parent() const noexcept { return *series_; }
  const std::string& id() const noexcept { return series_->id; }

  std::span<const double> read(std::size_t offset, std::size_t count) const {
    if (offset + count > size()) {
      throw ValidationError("read of " + std::to_string(count) + " samples at " +
                            std::to_string(offset) + " exceeds view of length " +
                            std::to_string(size()));
    }
    if (observer_) observer_(begin_ + offset, begin_ + offset + count);
    return std::span<const double>(series_->values).subspan(begin_ + offset, count);
  }

  SeriesView subview(std::size_t begin, std::size_t end) const {
    if (begin > end || end > size()) {
      throw ValidationError("subview out of range");
    }
    return SeriesView(*series_, begin_ + begin, begin_ + end, observer_);
  }

  SeriesView with_observer(ReadObserver observer) const {
    return SeriesView(*series_, begin_, end_, std::move(observer));
  }

 private:
  const TimeSeries* series_;
  std::size_t begin_;
  std::size_t end_;
  ReadObserver observer_;
};

inline std::vector<SeriesView> views_of(std::span<const TimeSeries> pool) {
  return std::vector<SeriesView>(pool.begin(), pool.end());
}

}  // namespace omega::data
