#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vaest {

// Dense shape, row-major storage. Rank 1 tensors of size 1 act as scalars.
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense 64-bit tensor. The gradient buffer is absent until backward()
// accumulates into it; when present it always matches the data shape.
class Tensor {
 public:
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static TensorPtr create(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static TensorPtr zeros(Shape shape, bool requires_grad = false);
  static TensorPtr full(Shape shape, double value, bool requires_grad = false);
  static TensorPtr scalar(double value, bool requires_grad = false);
  static TensorPtr matrix(std::size_t rows, std::size_t cols,
                          std::vector<double> data, bool requires_grad = false);
  // Widens 32-bit feature rows into a constant rank-2 tensor.
  static TensorPtr widen(std::size_t rows, std::size_t cols,
                         std::span<const float> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }
  // Row/column view of a rank-1 or rank-2 tensor; rank 1 is a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> mut_data() { return data_; }
  double value() const;  // scalar tensors only
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return requires_grad_; }
  bool has_grad() const { return !grad_.empty(); }
  std::span<const double> grad() const;
  // Zero-initialized on first use.
  std::span<double> grad_buffer();
  void accumulate_grad(std::span<const double> g);
  void zero_grad() { grad_.clear(); }

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_;
  std::vector<double> grad_;
};

}  // namespace vaest
