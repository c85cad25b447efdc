#pragma once

#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "phaseforge/error.hpp"

namespace phaseforge::nn {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<int>;

inline std::string shape_string(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

inline Eigen::Index shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Eigen::Index{1}, std::multiplies<>());
}

// Dense tensor: (C, H, W) activations, (O, C, kh, kw) kernels, (O) biases.
// The gradient buffer exists iff requires_grad.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false)
      : shape_(std::move(shape)), data_(Array::Zero(shape_size(shape_))) {
    set_requires_grad(requires_grad);
  }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Eigen::Index size() const { return data_.size(); }

  int channels() const { return dim(0); }
  int height() const { return dim(1); }
  int width() const { return dim(2); }

  Array& data() { return data_; }
  const Array& data() const { return data_; }
  Array& grad() { return grad_; }
  const Array& grad() const { return grad_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on) {
      grad_ = Array::Zero(data_.size());
    } else {
      grad_.resize(0);
    }
  }
  void zero_grad() {
    if (requires_grad_) grad_.setZero();
  }

  Scalar& at(int c, int y, int x) { return data_[(static_cast<Eigen::Index>(c) * height() + y) * width() + x]; }
  Scalar at(int c, int y, int x) const {
    return data_[(static_cast<Eigen::Index>(c) * height() + y) * width() + x];
  }

  // Row-major matrix view with `rows` rows over the data buffer.
  Eigen::Map<RowMatrix<Scalar>> matrix(Eigen::Index rows) {
    return {data_.data(), rows, data_.size() / rows};
  }
  Eigen::Map<const RowMatrix<Scalar>> matrix(Eigen::Index rows) const {
    return {data_.data(), rows, data_.size() / rows};
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_, requires_grad_);
    out.data() = data_.template cast<Other>();
    return out;
  }

 private:
  Shape shape_;
  Array data_;
  Array grad_;
  bool requires_grad_ = false;
};

template <typename Scalar>
void require_shape(const Tensor<Scalar>& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw Error(Errc::ShapeMismatch, std::string(what) + ": expected " + shape_string(expected) +
                                         ", got " + shape_string(t.shape()));
  }
}

template <typename Scalar>
void require_rank(const Tensor<Scalar>& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw Error(Errc::ShapeMismatch, std::string(what) + ": expected rank " + std::to_string(rank) +
                                         ", got " + shape_string(t.shape()));
  }
}

}  // namespace phaseforge::nn
