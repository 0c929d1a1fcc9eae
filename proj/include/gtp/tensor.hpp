#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gtp/error.hpp"

namespace gtp {

/// Dense row-major tensor of doubles. Rank is dynamic; the model only ever
/// needs rank 1 and 2, but shapes are kept generic so rasters (rank 3) can
/// reuse the same storage.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw DimensionError("tensor data length does not match shape");
    }
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor row(std::vector<double> values) {
    const int n = static_cast<int>(values.size());
    return Tensor({1, n}, std::move(values));
  }

  static Tensor identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  size_t size() const { return data_.size(); }

  int rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : bad_rank()); }
  int cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : bad_rank()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double x : data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

 private:
  static size_t checked_size(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw DimensionError("negative dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }
  [[noreturn]] int bad_rank() const {
    throw DimensionError("expected rank 1 or 2, got " + shape_str());
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace gtp
