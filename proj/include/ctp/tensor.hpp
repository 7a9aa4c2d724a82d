#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace ctp {

// Dense row-major float64 tensor. Rank 1 and 2 cover everything this
// project needs; shape is kept general for the checkpoint container.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);

  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor full(std::vector<std::int64_t> shape, double value);
  static Tensor from_data(std::vector<std::int64_t> shape, std::vector<double> data);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  // 2-D access: row-major.
  double& at(std::int64_t r, std::int64_t c);
  double at(std::int64_t r, std::int64_t c) const;

  std::int64_t rows() const;
  std::int64_t cols() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

  Tensor reshaped(std::vector<std::int64_t> shape) const;

  bool requires_grad = false;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

// Throws NumericError naming `context` if any entry is NaN/Inf.
void ensure_finite(const Tensor& t, const std::string& context);
void ensure_finite(double v, const std::string& context);

std::int64_t shape_product(const std::vector<std::int64_t>& shape);

}  // namespace ctp
