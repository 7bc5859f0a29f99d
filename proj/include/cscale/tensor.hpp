#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "cscale/error.hpp"

namespace cscale {

// Extents of a dense tensor, rank 1..4. Feature maps are (h, w, c) and
// convolution kernels are (k, k, c_in, c_out); vectors are rank 1.
class Shape {
public:
  Shape() : rank_(0), d_{0, 0, 0, 0} {}
  Shape(std::initializer_list<int> dims) { assign(std::vector<int>(dims)); }
  explicit Shape(const std::vector<int>& dims) { assign(dims); }

  int rank() const { return rank_; }
  int operator[](int axis) const { return d_[static_cast<size_t>(axis)]; }

  int64_t elements() const {
    int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= d_[static_cast<size_t>(i)];
    return rank_ == 0 ? 0 : n;
  }

  bool operator==(const Shape& o) const { return rank_ == o.rank_ && d_ == o.d_; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << d_[static_cast<size_t>(i)];
    os << ")";
    return os.str();
  }

  std::vector<int> dims() const { return std::vector<int>(d_.begin(), d_.begin() + rank_); }

private:
  void assign(const std::vector<int>& dims) {
    if (dims.empty() || dims.size() > 4) {
      throw ShapeError("tensor rank must be between 1 and 4, got " + std::to_string(dims.size()));
    }
    rank_ = static_cast<int>(dims.size());
    d_ = {1, 1, 1, 1};
    for (size_t i = 0; i < dims.size(); ++i) {
      if (dims[i] < 1) {
        throw ShapeError("tensor extents must be >= 1, got " + std::to_string(dims[i]) + " at axis " +
                         std::to_string(i));
      }
      d_[i] = dims[i];
    }
  }

  int rank_;
  std::array<int, 4> d_;
};

// Dense row-major tensor over float or double. Elements are laid out with
// the last declared axis fastest: a feature map (h, w, c) stores channel
// values of one pixel contiguously, a kernel (k, k, c_in, c_out) stores the
// c_out values of one (k, k, c_in) tap contiguously.
template <typename T>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(const Shape& shape) : shape_(shape), data_(static_cast<size_t>(shape.elements()), T(0)) {}

  Tensor(const Shape& shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_.elements()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
    }
  }

  static Tensor full(const Shape& shape, T value) {
    Tensor t(shape);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  int extent(int axis) const { return shape_[axis]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Rank-checked multi-axis access; hot loops index flat via data().
  T& at(int i) { return data_[static_cast<size_t>(i)]; }
  T at(int i) const { return data_[static_cast<size_t>(i)]; }
  T& at(int i, int j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  T at(int i, int j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  T& at(int i, int j, int k) { return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)]; }
  T at(int i, int j, int k) const { return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)]; }
  T& at(int i, int j, int k, int l) {
    return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  T at(int i, int j, int k, int l) const {
    return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  bool same_bytes(const Tensor& o) const {
    return shape_ == o.shape_ && std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(T)) == 0;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

private:
  Shape shape_;
  std::vector<T> data_;
};

inline void require_shape(bool ok, const std::string& message) {
  if (!ok) throw ShapeError(message);
}

}  // namespace cscale
