#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "gundet/errors.hpp"

namespace gundet {

/// Dense row-major double tensor. Small by design: the models in this project
/// build their graphs explicitly, so all that is needed here is shaped storage.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at2(int i, int j) { return data_[idx2(i, j)]; }
  double at2(int i, int j) const { return data_[idx2(i, j)]; }
  double& at3(int i, int j, int k) { return data_[idx3(i, j, k)]; }
  double at3(int i, int j, int k) const { return data_[idx3(i, j, k)]; }
  double& at4(int i, int j, int k, int l) { return data_[idx4(i, j, k, l)]; }
  double at4(int i, int j, int k, int l) const { return data_[idx4(i, j, k, l)]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static size_t count(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ValidationError("tensor dimension must be non-negative");
      n *= static_cast<size_t>(d);
    }
    return shape.empty() ? 0 : n;
  }

  size_t idx2(int i, int j) const {
    return static_cast<size_t>(i) * shape_[1] + j;
  }
  size_t idx3(int i, int j, int k) const {
    return (static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k;
  }
  size_t idx4(int i, int j, int k, int l) const {
    return ((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace gundet
