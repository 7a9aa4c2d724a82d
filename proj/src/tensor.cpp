#include "ctp/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ctp/errors.hpp"

namespace ctp {

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_product(shape_)), 0.0) {}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = value;
  return t;
}

Tensor Tensor::from_data(std::vector<std::int64_t> shape, std::vector<double> data) {
  if (shape_product(shape) != static_cast<std::int64_t>(data.size()))
    throw DimensionError("from_data: shape/data length mismatch");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

double& Tensor::at(std::int64_t r, std::int64_t c) {
  return data_[static_cast<std::size_t>(r * cols() + c)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  return data_[static_cast<std::size_t>(r * cols() + c)];
}

std::int64_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): tensor is not rank-2, shape " + shape_str());
  return shape_[0];
}

std::int64_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): tensor is not rank-2, shape " + shape_str());
  return shape_[1];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << "]";
  return os.str();
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  if (shape_product(shape) != size())
    throw DimensionError("reshaped: element count mismatch " + shape_str());
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

void ensure_finite(const Tensor& t, const std::string& context) {
  if (!t.all_finite()) throw NumericError("non-finite values in " + context);
}

void ensure_finite(double v, const std::string& context) {
  if (!std::isfinite(v)) throw NumericError("non-finite value in " + context);
}

}  // namespace ctp
