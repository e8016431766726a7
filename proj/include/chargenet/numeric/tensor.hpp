#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chargenet/errors.hpp"

namespace chargenet {

#ifdef NDEBUG
inline constexpr bool kCheckFinite = false;
#else
inline constexpr bool kCheckFinite = true;
#endif

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major float64 tensor of rank 0, 1 or 2.
///
/// A rank-1 tensor of extent n behaves as a 1 x n row vector in every
/// matrix operation. `grad` stays empty until a backward pass or an
/// explicit `zero_grad()` sizes it.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;

  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {}

  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (numel(shape) != data.size())
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{n}, std::move(v));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> values;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged matrix literal");
      values.insert(values.end(), r.begin(), r.end());
    }
    return Tensor(Shape{rows.size(), cols}, std::move(values));
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }

  std::size_t rows() const {
    switch (shape.size()) {
      case 0:
      case 1:
        return 1;
      case 2:
        return shape[0];
      default:
        throw DimensionError("rank > 2 tensors have no matrix view: " + shape_str(shape));
    }
  }

  std::size_t cols() const {
    switch (shape.size()) {
      case 0:
        return 1;
      case 1:
        return shape[0];
      case 2:
        return shape[1];
      default:
        throw DimensionError("rank > 2 tensors have no matrix view: " + shape_str(shape));
    }
  }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data).subspan(r * cols(), cols()); }

  bool has_grad() const { return grad.size() == data.size() && !data.empty(); }
  void zero_grad() { grad.assign(data.size(), 0.0); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void check_finite(const Tensor& t, const char* op) {
  if constexpr (kCheckFinite) {
    if (!t.all_finite()) throw std::domain_error(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace chargenet
