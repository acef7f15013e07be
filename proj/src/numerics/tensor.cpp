#include "hec/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hec/error.hpp"

namespace hec::num {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_dims(const Shape& shape) {
  for (std::size_t d : shape) {
    require(d > 0, ErrorKind::kShape,
            "tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  require(data_.size() == shape_size(shape_), ErrorKind::kShape,
          "tensor data length " + std::to_string(data_.size()) +
              " does not match shape " + shape_str(shape_));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data) {
  return Tensor(Shape{rows, cols}, std::move(data));
}

Tensor Tensor::uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

Tensor Tensor::normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  require(rank() <= 1, ErrorKind::kShape,
          "matrix view of tensor with shape " + shape_str(shape_));
  return 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  require(rank() == 0, ErrorKind::kShape,
          "matrix view of tensor with shape " + shape_str(shape_));
  return 1;
}

double Tensor::item() const {
  require(data_.size() == 1, ErrorKind::kShape,
          "item() on tensor with shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require(other.data_.size() == data_.size(), ErrorKind::kShape,
          "accumulate " + shape_str(other.shape_) + " into " +
              shape_str(shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor Tensor::row_slice(std::size_t begin, std::size_t end) const {
  require(rank() == 2 && begin < end && end <= shape_[0], ErrorKind::kShape,
          "row_slice out of range on " + shape_str(shape_));
  const std::size_t c = shape_[1];
  return Tensor(Shape{end - begin, c},
                std::vector<double>(data_.begin() + begin * c,
                                    data_.begin() + end * c));
}

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_size(shape) == data_.size(), ErrorKind::kShape,
          "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kShape,
          "max_abs_diff shape mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace hec::num
