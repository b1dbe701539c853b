#ifndef PLAYPRUNE_TENSOR_HPP
#define PLAYPRUNE_TENSOR_HPP

#include "error.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace playprune {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape &shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array of doubles. Layout for images is [N,C,H,W], so a
/// single filter or channel is always a contiguous slice.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto e : shape_)
      PLAYPRUNE_CHECK(e > 0, "tensor extent must be positive, got ",
                      shape_string(shape_));
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    PLAYPRUNE_CHECK(shape_size(shape_) == data_.size(), "tensor shape ",
                    shape_string(shape_), " does not match ", data_.size(),
                    " elements");
  }

  const Shape &shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double *ptr() { return data_.data(); }
  const double *ptr() const { return data_.data(); }
  std::vector<double> &vec() { return data_; }
  const std::vector<double> &vec() const { return data_; }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same storage, different shape; element count must agree.
  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  bool has_grad() const { return !grad_.empty() || data_.empty(); }
  void ensure_grad() {
    if (grad_.size() != data_.size())
      grad_.assign(data_.size(), 0.0);
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }
  void drop_grad() { grad_.clear(); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }

  bool operator==(const Tensor &o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

} // namespace playprune

#endif // PLAYPRUNE_TENSOR_HPP
