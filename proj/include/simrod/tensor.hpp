#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace simrod {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor. Image tensors use (batch, channels, height, width).
///
/// Instantiated for float (the compute path) and double (the 64-bit shadow
/// path used by finite-difference checks). A zero-sized dimension is allowed
/// so that an empty channel block can take part in concatenation.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// 4-D element access (n, c, h, w).
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  void fill(T value);
  /// Reinterprets the buffer under a new shape of equal element count.
  BasicTensor reshaped(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Learnable tensor with an accumulated gradient of the same shape.
template <typename T>
struct BasicParam {
  BasicTensor<T> value;
  BasicTensor<T> grad;

  BasicParam() = default;
  explicit BasicParam(Shape shape) : value(shape), grad(std::move(shape)) {}
  explicit BasicParam(BasicTensor<T> v) : value(std::move(v)), grad(value.shape()) {}

  std::size_t numel() const noexcept { return value.numel(); }
  void zero_grad() { grad.fill(T{0}); }

  template <typename U>
  BasicParam<U> cast() const {
    BasicParam<U> out(value.template cast<U>());
    out.grad = grad.template cast<U>();
    return out;
  }
};

using Param = BasicParam<float>;

/// Throws ShapeError unless the tensor is 4-D.
template <typename T>
void require_4d(const BasicTensor<T>& t, const char* what);

}  // namespace simrod
