#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "phaseforge/grid.hpp"
#include "phaseforge/nn/tensor.hpp"

// Forward and backward passes of the layer primitives as free functions.
// Activations are (C, H, W); batching is left to the caller.
namespace phaseforge::nn {

/// Patch matrix for a stride-1 "same" convolution with a k x k window:
/// row (c*k + ky)*k + kx, column y*W + x, zero outside the image.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Tensor<Scalar>& in, int k) {
  const int C = in.channels(), H = in.height(), W = in.width(), pad = k / 2;
  RowMatrix<Scalar> col(static_cast<Eigen::Index>(C) * k * k, static_cast<Eigen::Index>(H) * W);
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        const int dy = ky - pad, dx = kx - pad;
        for (int y = 0; y < H; ++y) {
          Scalar* dst = col.data() + row * col.cols() + static_cast<Eigen::Index>(y) * W;
          const int sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill(dst, dst + W, Scalar(0));
            continue;
          }
          const Scalar* src = in.data().data() + (static_cast<Eigen::Index>(c) * H + sy) * W;
          for (int x = 0; x < W; ++x) {
            const int sx = x + dx;
            dst[x] = (sx >= 0 && sx < W) ? src[sx] : Scalar(0);
          }
        }
      }
    }
  }
  return col;
}

/// Adjoint of im2col: scatters patch gradients back onto a (C, H, W) tensor.
template <typename Scalar>
Tensor<Scalar> col2im(const RowMatrix<Scalar>& col, int C, int H, int W, int k) {
  Tensor<Scalar> out({C, H, W});
  const int pad = k / 2;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        const int dy = ky - pad, dx = kx - pad;
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const Scalar* src = col.data() + row * col.cols() + static_cast<Eigen::Index>(y) * W;
          Scalar* dst = out.data().data() + (static_cast<Eigen::Index>(c) * H + sy) * W;
          for (int x = 0; x < W; ++x) {
            const int sx = x + dx;
            if (sx >= 0 && sx < W) dst[sx] += src[x];
          }
        }
      }
    }
  }
  return out;
}

namespace detail {

template <typename Scalar>
void check_conv(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const int k = kernel.dim(2);
  if (kernel.dim(3) != k || (k != 1 && k != 3) || kernel.dim(1) != input.channels()) {
    throw Error(Errc::ShapeMismatch, "conv2d kernel " + shape_string(kernel.shape()) +
                                         " incompatible with input " + shape_string(input.shape()));
  }
  require_shape(bias, {kernel.dim(0)}, "conv2d bias");
}

}  // namespace detail

/// Stride-1 cross-correlation; 3x3 kernels use zero padding 1, 1x1 none.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                              const Tensor<Scalar>& bias) {
  detail::check_conv(input, kernel, bias);
  const int O = kernel.dim(0), C = input.channels(), k = kernel.dim(2);
  Tensor<Scalar> out({O, input.height(), input.width()});
  auto y = out.matrix(O);
  if (k == 1) {
    y.noalias() = kernel.matrix(O) * input.matrix(C);
  } else {
    y.noalias() = kernel.matrix(O) * im2col(input, k);
  }
  y.colwise() += bias.data().matrix();
  return out;
}

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> kernel;
  Tensor<Scalar> bias;
};

/// Exact gradients of conv2d_forward. `patches` may carry the im2col matrix
/// of `input` computed during the forward pass.
template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                  const Tensor<Scalar>& grad_out,
                                  const RowMatrix<Scalar>* patches = nullptr) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const int O = kernel.dim(0), C = input.channels(), H = input.height(), W = input.width();
  const int k = kernel.dim(2);
  require_shape(grad_out, {O, H, W}, "conv2d grad_out");

  RowMatrix<Scalar> owned;
  const RowMatrix<Scalar>* col = patches;
  if (k == 1) {
    owned = input.matrix(C);
    col = &owned;
  } else if (col == nullptr) {
    owned = im2col(input, k);
    col = &owned;
  }
  const auto gy = grad_out.matrix(O);

  ConvGrads<Scalar> g{Tensor<Scalar>(), Tensor<Scalar>(kernel.shape()), Tensor<Scalar>({O})};
  for (int o = 0; o < O; ++o) {
    g.bias.data()[o] = static_cast<Scalar>(gy.row(o).template cast<double>().sum());
  }

  // Long pixel reductions accumulate blockwise in double.
  constexpr Eigen::Index kBlock = 1024;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(O, col->rows());
  for (Eigen::Index start = 0; start < gy.cols(); start += kBlock) {
    const Eigen::Index n = std::min(kBlock, gy.cols() - start);
    acc += (gy.middleCols(start, n) * col->middleCols(start, n).transpose()).template cast<double>();
  }
  g.kernel.matrix(O) = acc.cast<Scalar>();

  RowMatrix<Scalar> dcol = kernel.matrix(O).transpose() * gy;
  if (k == 1) {
    g.input = Tensor<Scalar>({C, H, W});
    g.input.matrix(C) = dcol;
  } else {
    g.input = col2im(dcol, C, H, W, k);
  }
  return g;
}

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.data() = x.data().max(Scalar(0));
  return y;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out) {
  require_shape(grad_out, x.shape(), "relu grad_out");
  Tensor<Scalar> g(x.shape());
  g.data() = (x.data() > Scalar(0)).select(grad_out.data(), Scalar(0));
  return g;
}

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> output;
  std::vector<Eigen::Index> argmax;  // flat input index per output element
};

/// 2x2 max pooling, stride 2. Ties resolve to the first element in
/// row-major window order.
template <typename Scalar>
PoolResult<Scalar> maxpool2_forward(const Tensor<Scalar>& x) {
  require_rank(x, 3, "maxpool2 input");
  const int C = x.channels(), H = x.height(), W = x.width();
  if (H % 2 != 0 || W % 2 != 0) {
    throw Error(Errc::OddDimensions, "maxpool2 needs even dimensions, got " + shape_string(x.shape()));
  }
  PoolResult<Scalar> r{Tensor<Scalar>({C, H / 2, W / 2}), {}};
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  Eigen::Index o = 0;
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H / 2; ++y) {
      for (int xx = 0; xx < W / 2; ++xx, ++o) {
        Eigen::Index best = (static_cast<Eigen::Index>(c) * H + 2 * y) * W + 2 * xx;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const Eigen::Index i = (static_cast<Eigen::Index>(c) * H + 2 * y + dy) * W + 2 * xx + dx;
            if (x.data()[i] > x.data()[best]) best = i;
          }
        }
        r.argmax[static_cast<std::size_t>(o)] = best;
        r.output.data()[o] = x.data()[best];
      }
    }
  }
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool2_backward(const Shape& input_shape, const std::vector<Eigen::Index>& argmax,
                                 const Tensor<Scalar>& grad_out) {
  if (static_cast<Eigen::Index>(argmax.size()) != grad_out.size()) {
    throw Error(Errc::ShapeMismatch, "maxpool2 grad_out does not match the forward pass");
  }
  Tensor<Scalar> g(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    g.data()[argmax[o]] += grad_out.data()[static_cast<Eigen::Index>(o)];
  }
  return g;
}

/// Nearest-neighbour x2 upsampling.
template <typename Scalar>
Tensor<Scalar> upsample2_forward(const Tensor<Scalar>& x) {
  require_rank(x, 3, "upsample2 input");
  const int C = x.channels(), H = x.height(), W = x.width();
  Tensor<Scalar> y({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c) {
    for (int yy = 0; yy < 2 * H; ++yy) {
      for (int xx = 0; xx < 2 * W; ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> upsample2_backward(const Tensor<Scalar>& grad_out) {
  require_rank(grad_out, 3, "upsample2 grad_out");
  const int C = grad_out.channels(), H = grad_out.height(), W = grad_out.width();
  if (H % 2 != 0 || W % 2 != 0) throw Error(Errc::OddDimensions, "upsample2 grad_out must be even");
  Tensor<Scalar> g({C, H / 2, W / 2});
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) g.at(c, y / 2, x / 2) += grad_out.at(c, y, x);
    }
  }
  return g;
}

/// Channel-axis concatenation.
template <typename Scalar>
Tensor<Scalar> concat_forward(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_rank(a, 3, "concat lhs");
  require_rank(b, 3, "concat rhs");
  if (a.height() != b.height() || a.width() != b.width()) {
    throw Error(Errc::ShapeMismatch, "concat spatial sizes differ: " + shape_string(a.shape()) +
                                         " vs " + shape_string(b.shape()));
  }
  Tensor<Scalar> y({a.channels() + b.channels(), a.height(), a.width()});
  y.data() << a.data(), b.data();
  return y;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> concat_backward(const Tensor<Scalar>& grad_out, int lhs_channels) {
  require_rank(grad_out, 3, "concat grad_out");
  const int H = grad_out.height(), W = grad_out.width();
  const int rhs_channels = grad_out.channels() - lhs_channels;
  if (lhs_channels < 0 || rhs_channels < 0) throw Error(Errc::ShapeMismatch, "bad concat split");
  Tensor<Scalar> ga({lhs_channels, H, W}), gb({rhs_channels, H, W});
  ga.data() = grad_out.data().head(ga.size());
  gb.data() = grad_out.data().tail(gb.size());
  return {std::move(ga), std::move(gb)};
}

template <typename Scalar>
Tensor<Scalar> residual_add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_shape(b, a.shape(), "residual_add");
  Tensor<Scalar> y(a.shape());
  y.data() = a.data() + b.data();
  return y;
}

template <typename Scalar>
struct LossResult {
  double loss = 0;
  Tensor<Scalar> grad;  // d loss / d logits
  std::size_t count = 0;
};

/// Mean over masked pixels of -log softmax(logits)[target].
template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, const OrderGrid& target,
                                         const Mask& mask) {
  require_rank(logits, 3, "softmax_cross_entropy logits");
  const int K = logits.channels(), H = logits.height(), W = logits.width();
  if (target.rows() != H || target.cols() != W || mask.rows() != H || mask.cols() != W) {
    throw Error(Errc::ShapeMismatch, "target/mask do not match logits " + shape_string(logits.shape()));
  }
  const Eigen::Index plane = static_cast<Eigen::Index>(H) * W;
  LossResult<Scalar> r{0.0, Tensor<Scalar>(logits.shape()), 0};
  for (Eigen::Index p = 0; p < plane; ++p) {
    if (!mask.data()[p]) continue;
    const std::int32_t t = target.data()[p];
    if (t < 0 || t >= K) {
      throw Error(Errc::TargetOutOfRange, "target " + std::to_string(t) + " outside [0, " +
                                              std::to_string(K - 1) + "]");
    }
    ++r.count;
  }
  if (r.count == 0) return r;

  const double inv_n = 1.0 / static_cast<double>(r.count);
  std::vector<double> e(static_cast<std::size_t>(K));
  double total = 0;
  for (Eigen::Index p = 0; p < plane; ++p) {
    if (!mask.data()[p]) continue;
    double m = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) m = std::max(m, static_cast<double>(logits.data()[k * plane + p]));
    double z = 0;
    for (int k = 0; k < K; ++k) {
      e[static_cast<std::size_t>(k)] = std::exp(static_cast<double>(logits.data()[k * plane + p]) - m);
      z += e[static_cast<std::size_t>(k)];
    }
    const std::int32_t t = target.data()[p];
    total += m + std::log(z) - static_cast<double>(logits.data()[t * plane + p]);
    for (int k = 0; k < K; ++k) {
      const double onehot = k == t ? 1.0 : 0.0;
      r.grad.data()[k * plane + p] = static_cast<Scalar>((e[static_cast<std::size_t>(k)] / z - onehot) * inv_n);
    }
  }
  r.loss = total * inv_n;
  return r;
}

}  // namespace phaseforge::nn
