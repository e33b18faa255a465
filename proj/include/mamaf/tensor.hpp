#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mamaf/errors.hpp"

namespace mamaf {

using Index = Eigen::Index;

/// Ordered list of positive extents, outermost first.
class Shape {
public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<Index> dims) : dims_(std::move(dims)) { validate(); }

  Index rank() const { return static_cast<Index>(dims_.size()); }
  Index operator[](Index axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  Index back() const { return dims_.back(); }
  const std::vector<Index>& dims() const { return dims_; }

  Index numel() const {
    return std::accumulate(dims_.begin(), dims_.end(), Index{1}, std::multiplies<>());
  }

  /// Normalizes a possibly negative axis and range-checks it.
  Index axis(Index a) const {
    const Index r = rank();
    const Index n = a < 0 ? a + r : a;
    if (n < 0 || n >= r) {
      throw ShapeError("axis " + std::to_string(a) + " out of range for shape " + str());
    }
    return n;
  }

  std::string str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
    os << ')';
    return os.str();
  }

  friend bool operator==(const Shape& a, const Shape& b) { return a.dims_ == b.dims_; }

private:
  void validate() const {
    if (dims_.empty()) throw ShapeError("tensor rank must be at least 1");
    for (Index d : dims_) {
      if (d < 1) {
        std::ostringstream os;
        os << "tensor extents must be positive, got (";
        for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
        os << ')';
        throw ShapeError(os.str());
      }
    }
  }

  std::vector<Index> dims_;
};

/// Dense row-major N-d array. Channel-last layouts ([N,H,W,C]) throughout.
template <typename Scalar_>
class Tensor {
public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() : shape_{1}, data_(Storage::Zero(1)) {}
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Storage::Zero(shape_.numel())) {}
  Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
    }
  }
  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), Eigen::Map<const Storage>(values.begin(), static_cast<Index>(values.size()))) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }
  static Tensor scalar(Scalar v) { return constant(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return shape_.rank(); }
  Index dim(Index axis) const { return shape_[shape_.axis(axis)]; }
  Index size() const { return data_.size(); }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> span() const { return {data_.data(), static_cast<std::size_t>(data_.size())}; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  template <typename... Is>
  Scalar& operator()(Is... is) { return data_[offset({static_cast<Index>(is)...})]; }
  template <typename... Is>
  Scalar operator()(Is... is) const { return data_[offset({static_cast<Index>(is)...})]; }

  Index offset(std::initializer_list<Index> idx) const {
    Index off = 0;
    Index axis = 0;
    for (Index i : idx) off = off * shape_[axis++] + i;
    return off;
  }

  /// Same data, new extents. Element counts must match.
  Tensor reshaped(Shape shape) const {
    if (shape.numel() != size()) {
      throw ShapeError("cannot reshape " + shape_.str() + " (" + std::to_string(size()) +
                       " elements) to " + shape.str());
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, data_.template cast<U>());
  }

  /// Slice along axis 0.
  Tensor frame(Index i) const {
    std::vector<Index> dims(shape_.dims().begin() + 1, shape_.dims().end());
    if (dims.empty()) dims.push_back(1);
    const Index stride = size() / shape_[0];
    return Tensor(Shape(std::move(dims)), data_.segment(i * stride, stride));
  }

  bool all_finite() const { return data_.isFinite().all(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

private:
  Shape shape_;
  Storage data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

}  // namespace mamaf
