#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "omega/error.hpp"

namespace omega::numerics {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Finite-value scans run after every kernel when enabled. Debug builds turn
// them on by default; release builds skip the scan unless a caller opts in.
inline bool& finite_checks_flag() {
#ifdef NDEBUG
  static bool enabled = false;
#else
  static bool enabled = true;
#endif
  return enabled;
}
inline bool finite_checks_enabled() { return finite_checks_flag(); }
inline void set_finite_checks(bool enabled) { finite_checks_flag() = enabled; }

/// Dense row-major array with an optional gradient buffer of the same shape.
///
/// Rank-0 tensors (empty shape) hold a single scalar. Extents are positive.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : shape_{}, data_(1, T{0}) {}

  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static BasicTensor scalar(T value) { return BasicTensor(Shape{}, {value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rows() const { return rank() == 0 ? 1 : numel() / shape_.back(); }
  std::size_t cols() const { return rank() == 0 ? 1 : shape_.back(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  T item() const {
    if (numel() != 1) {
      throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
    }
    return data_[0];
  }

  void reshape(Shape shape) {
    validate_shape(shape);
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                       shape_str(shape));
    }
    shape_ = std::move(shape);
  }

  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<T> grad() {
    if (!grad_) throw ContractError("tensor has no gradient buffer");
    return *grad_;
  }
  std::span<const T> grad() const {
    if (!grad_) throw ContractError("tensor has no gradient buffer");
    return *grad_;
  }
  std::span<T> ensure_grad() {
    if (!grad_) grad_.emplace(data_.size(), T{0});
    return *grad_;
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), T{0});
  }
  void drop_grad() { grad_.reset(); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void validate_shape(const Shape& shape) {
    for (std::size_t extent : shape) {
      if (extent == 0) {
        throw ShapeError("tensor extents must be positive, got " +
                         shape_str(shape));
      }
    }
  }

  Shape shape_;
  std::vector<T> data_;
  std::optional<std::vector<T>> grad_;
};

using Tensor = BasicTensor<float>;

template <class T>
void require_finite(std::span<const T> values, const char* where) {
  if (!finite_checks_enabled()) return;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string("non-finite value produced by ") + where +
                         " at index " + std::to_string(i));
    }
  }
}

template <class To, class From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& src) {
  std::vector<To> out(src.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(src[i]);
  return BasicTensor<To>(src.shape(), std::move(out));
}

}  // namespace omega::numerics
