#include "vaest/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vaest {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
  if (shape_.empty()) throw std::invalid_argument("tensor: empty shape");
  for (std::size_t d : shape_) {
    if (d == 0) throw std::invalid_argument("tensor: zero dimension in " + shape_str(shape_));
  }
  if (data_.size() != shape_size(shape_)) {
    throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
  }
}

TensorPtr Tensor::create(Shape shape, std::vector<double> data, bool requires_grad) {
  return std::make_shared<Tensor>(std::move(shape), std::move(data), requires_grad);
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(shape_size(shape), 0.0);
  return create(std::move(shape), std::move(data), requires_grad);
}

TensorPtr Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(shape_size(shape), value);
  return create(std::move(shape), std::move(data), requires_grad);
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
  return create({1}, {value}, requires_grad);
}

TensorPtr Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                         bool requires_grad) {
  return create({rows, cols}, std::move(data), requires_grad);
}

TensorPtr Tensor::widen(std::size_t rows, std::size_t cols, std::span<const float> data) {
  if (data.size() != rows * cols) {
    throw std::invalid_argument("tensor: widen length " + std::to_string(data.size()) +
                                " does not match " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  std::vector<double> wide(data.begin(), data.end());
  return create({rows, cols}, std::move(wide), false);
}

std::size_t Tensor::rows() const {
  if (rank() == 1) return 1;
  if (rank() == 2) return shape_[0];
  throw std::invalid_argument("tensor: rows() on rank-" + std::to_string(rank()) + " tensor");
}

std::size_t Tensor::cols() const {
  if (rank() == 1) return shape_[0];
  if (rank() == 2) return shape_[1];
  throw std::invalid_argument("tensor: cols() on rank-" + std::to_string(rank()) + " tensor");
}

double Tensor::value() const {
  if (!is_scalar()) {
    throw std::invalid_argument("tensor: value() on non-scalar shape " + shape_str(shape_));
  }
  return data_[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data_.at(r * cols() + c);
}

std::span<const double> Tensor::grad() const {
  if (grad_.empty()) throw std::logic_error("tensor: gradient not populated");
  return grad_;
}

std::span<double> Tensor::grad_buffer() {
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (g.size() != data_.size()) {
    throw std::invalid_argument("tensor: gradient length " + std::to_string(g.size()) +
                                " does not match shape " + shape_str(shape_));
  }
  auto buf = grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace vaest
