#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coordconv/rng.hpp"

namespace coordconv {

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

template <class T>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr Dtype value = Dtype::f32;
};
template <>
struct dtype_of<double> {
  static constexpr Dtype value = Dtype::f64;
};

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int64_t> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<int64_t> dims) : dims_(std::move(dims)) { validate(); }

  int rank() const { return static_cast<int>(dims_.size()); }
  int64_t operator[](int i) const { return dims_[static_cast<size_t>(i)]; }
  const std::vector<int64_t>& dims() const { return dims_; }

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : dims_) n *= d;
    return n;
  }

  bool operator==(const Shape& o) const = default;

  std::string str() const;

 private:
  void validate() const {
    for (int64_t d : dims_) {
      if (d <= 0) throw std::invalid_argument("Shape: extents must be positive, got " + str());
    }
  }

  std::vector<int64_t> dims_;
};

// Dense row-major tensor handle. Copies are shallow: they share the value
// buffer (and gradient buffer, if any), like the underlying storage of a
// framework tensor. Use clone() for a deep copy.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(static_cast<size_t>(shape_.numel()), fill)) {}

  static Tensor from(Shape shape, std::vector<T> values) {
    if (static_cast<int64_t>(values.size()) != shape.numel())
      throw std::invalid_argument("Tensor::from: value count does not match shape " + shape.str());
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  static Tensor uniform(Shape shape, T lo, T hi, Rng& rng) {
    if (!(lo <= hi)) throw std::invalid_argument("Tensor::uniform: requires lo <= hi");
    Tensor t(std::move(shape));
    for (T& v : *t.data_) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor normal(Shape shape, T mean, T stddev, Rng& rng) {
    if (!(stddev >= T(0))) throw std::invalid_argument("Tensor::normal: requires stddev >= 0");
    Tensor t(std::move(shape));
    for (T& v : *t.data_) v = static_cast<T>(rng.normal(mean, stddev));
    return t;
  }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_.numel(); }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  std::span<T> values() { return {data_->data(), data_->size()}; }
  std::span<const T> values() const { return {data_->data(), data_->size()}; }

  T item() const {
    if (!defined() || numel() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar");
    return (*data_)[0];
  }

  bool requires_grad() const { return static_cast<bool>(grad_); }
  Tensor& set_requires_grad(bool on) {
    if (on && !grad_) grad_ = std::make_shared<std::vector<T>>(data_->size(), T(0));
    if (!on) grad_.reset();
    return *this;
  }
  T* grad() { return grad_ ? grad_->data() : nullptr; }
  const T* grad() const { return grad_ ? grad_->data() : nullptr; }
  std::span<T> grad_values() { return grad_ ? std::span<T>{grad_->data(), grad_->size()} : std::span<T>{}; }
  std::span<const T> grad_values() const {
    return grad_ ? std::span<const T>{grad_->data(), grad_->size()} : std::span<const T>{};
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), T(0));
  }

  // New tensor with the same buffers viewed under a different shape.
  // Gradients flow through for free since the grad buffer is shared too.
  Tensor reshape(Shape shape) const {
    if (shape.numel() != numel())
      throw std::invalid_argument("Tensor::reshape: element count mismatch " + shape_.str() + " -> " + shape.str());
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    if (grad_) t.grad_ = std::make_shared<std::vector<T>>(*grad_);
    return t;
  }

  bool shares_data(const Tensor& o) const { return data_ == o.data_; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  std::shared_ptr<std::vector<T>> grad_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace coordconv
