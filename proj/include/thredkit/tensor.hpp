#ifndef THREDKIT_TENSOR_HPP
#define THREDKIT_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "thredkit/error.hpp"

namespace thredkit {

using Dims = std::vector<std::size_t>;

inline std::string shape_string(const Dims& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

inline std::size_t element_count(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array of doubles. A rank-0 tensor is stored as dims {1}.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Dims dims, double fill = 0.0)
      : dims_(std::move(dims)), data_(element_count(dims_), fill) {}

  Tensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (element_count(dims_) != data_.size()) {
      throw ShapeError("tensor dims " + shape_string(dims_) + " do not match " +
                       std::to_string(data_.size()) + " values");
    }
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const { return dims_.empty() ? 0 : dims_[0]; }
  std::size_t cols() const { return dims_.size() < 2 ? 1 : dims_[1]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

  double item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(dims_));
    return data_[0];
  }

  std::string shape() const { return shape_string(dims_); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

}  // namespace thredkit

#endif  // THREDKIT_TENSOR_HPP
