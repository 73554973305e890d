#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "casgnn/errors.hpp"

namespace casgnn {

/// Extents of a rank-4 tensor: (batch, channels, height, width), row-major
/// with batch outermost. Scalars and channel vectors are degenerate shapes
/// such as (1,1,1,1) and (1,C,1,1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  bool operator==(const Shape& o) const = default;

  bool valid() const { return n >= 0 && c >= 0 && h >= 0 && w >= 0; }

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
};

template <class S>
struct TensorImpl {
  Shape shape;
  std::vector<S> data;
  bool requires_grad = false;
  std::vector<S> grad;  // empty until first accumulation
};

/// Shared-ownership handle to a dense rank-4 array. Copies alias the same
/// storage; operations never mutate existing data, they produce new tensors.
/// Gradients accumulate into a lazily allocated side buffer.
template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false) {
    check_shape(s);
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    t.impl_->shape = s;
    t.impl_->data.assign(s.size(), S(0));
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(Shape s, S value) {
    Tensor t = zeros(s);
    for (auto& v : t.impl_->data) v = value;
    return t;
  }

  static Tensor from(Shape s, std::vector<S> values, bool requires_grad = false) {
    check_shape(s);
    if (values.size() != s.size()) {
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + s.str());
    }
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<S>>();
    t.impl_->shape = s;
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(S value, bool requires_grad = false) {
    Tensor t = zeros({1, 1, 1, 1}, requires_grad);
    t.impl_->data[0] = value;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->shape.size(); }

  std::vector<S>& data() { return impl_->data; }
  const std::vector<S>& data() const { return impl_->data; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }

  /// Gradient buffer, allocated (zeroed) on first access.
  std::vector<S>& grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), S(0));
    return impl_->grad;
  }
  const std::vector<S>& grad() const { return impl_->grad; }

  void zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), S(0));
  }

  std::size_t offset(int n, int c, int y, int x) const {
    const Shape& s = impl_->shape;
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x;
  }

  S at(int n, int c, int y, int x) const { return impl_->data[offset(n, c, y, x)]; }
  S& at(int n, int c, int y, int x) { return impl_->data[offset(n, c, y, x)]; }

  S item() const {
    if (size() != 1) {
      throw UsageError("item() requires a scalar tensor, got " + shape().str());
    }
    return impl_->data[0];
  }

  /// Deep copy with fresh storage; gradient buffer is not copied.
  Tensor clone() const {
    Tensor t = from(shape(), impl_->data, impl_->requires_grad);
    return t;
  }

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

  std::shared_ptr<TensorImpl<S>>& impl() { return impl_; }
  const std::shared_ptr<TensorImpl<S>>& impl() const { return impl_; }

 private:
  static void check_shape(const Shape& s) {
    if (!s.valid()) throw DimensionError("negative extent in shape " + s.str());
  }

  std::shared_ptr<TensorImpl<S>> impl_;
};

/// Throws NumericError if any stored scalar is NaN or infinite. Every
/// tensor-core operation runs this on its output: non-finite values are an
/// error state, never silently propagated.
template <class S>
void check_finite(const char* op, const Tensor<S>& t) {
  for (const S v : t.data()) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace casgnn
