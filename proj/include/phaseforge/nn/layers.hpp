#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "phaseforge/nn/ops.hpp"

namespace phaseforge::nn {

template <typename Scalar>
struct NamedParam {
  std::string name;
  Tensor<Scalar>* tensor;
};

// Convolution with trainable kernel and bias. forward() caches what
// backward() needs; backward() accumulates into the parameter gradients.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel_size)
      : weight_({out_channels, in_channels, kernel_size, kernel_size}, true),
        bias_({out_channels}, true) {}

  /// He (fan-in) Gaussian initialisation; biases start at zero.
  void initialize(std::mt19937_64& rng) {
    const int fan_in = weight_.dim(1) * weight_.dim(2) * weight_.dim(3);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (Eigen::Index i = 0; i < weight_.size(); ++i) weight_.data()[i] = static_cast<Scalar>(normal(rng));
    bias_.data().setZero();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    input_ = x;
    if (kernel_size() == 3) {
      detail::check_conv(x, weight_, bias_);
      patches_ = im2col(x, 3);
      Tensor<Scalar> out({out_channels(), x.height(), x.width()});
      out.matrix(out_channels()).noalias() = weight_.matrix(out_channels()) * patches_;
      out.matrix(out_channels()).colwise() += bias_.data().matrix();
      return out;
    }
    return conv2d_forward(x, weight_, bias_);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) {
    ConvGrads<Scalar> g = conv2d_backward(input_, weight_, grad_out, kernel_size() == 3 ? &patches_ : nullptr);
    weight_.grad() += g.kernel.data();
    bias_.grad() += g.bias.data();
    return std::move(g.input);
  }

  int in_channels() const { return weight_.dim(1); }
  int out_channels() const { return weight_.dim(0); }
  int kernel_size() const { return weight_.dim(2); }
  Eigen::Index parameter_count() const { return weight_.size() + bias_.size(); }

  Tensor<Scalar>& weight() { return weight_; }
  Tensor<Scalar>& bias() { return bias_; }

  void collect(const std::string& prefix, std::vector<NamedParam<Scalar>>& out) {
    out.push_back({prefix + ".weight", &weight_});
    out.push_back({prefix + ".bias", &bias_});
  }

 private:
  Tensor<Scalar> weight_;
  Tensor<Scalar> bias_;
  Tensor<Scalar> input_;
  RowMatrix<Scalar> patches_;
};

// y = x + conv(relu(conv(x))), no normalisation and no activation after the sum.
template <typename Scalar>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  explicit ResidualBlock(int channels) : first_(channels, channels, 3), second_(channels, channels, 3) {}

  void initialize(std::mt19937_64& rng) {
    first_.initialize(rng);
    second_.initialize(rng);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    hidden_ = first_.forward(x);
    return residual_add(x, second_.forward(relu_forward(hidden_)));
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) {
    Tensor<Scalar> g = first_.backward(relu_backward(hidden_, second_.backward(grad_out)));
    g.data() += grad_out.data();
    return g;
  }

  Eigen::Index parameter_count() const { return first_.parameter_count() + second_.parameter_count(); }

  void collect(const std::string& prefix, std::vector<NamedParam<Scalar>>& out) {
    first_.collect(prefix + ".conv1", out);
    second_.collect(prefix + ".conv2", out);
  }

 private:
  Conv2d<Scalar> first_;
  Conv2d<Scalar> second_;
  Tensor<Scalar> hidden_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::ArrayXd m;
  Eigen::ArrayXd v;
  long step = 0;
};

/// One bias-corrected Adam update of `param` from its gradient buffer.
/// Moments are kept in double.
template <typename Scalar>
void adam_step(Tensor<Scalar>& param, AdamState& state, const AdamConfig& cfg) {
  if (!param.requires_grad()) throw Error(Errc::ShapeMismatch, "adam_step on a tensor without gradient");
  if (state.m.size() == 0) {
    state.m = Eigen::ArrayXd::Zero(param.size());
    state.v = Eigen::ArrayXd::Zero(param.size());
  }
  if (state.m.size() != param.size()) throw Error(Errc::ShapeMismatch, "adam state does not match parameter");
  ++state.step;
  const Eigen::ArrayXd g = param.grad().template cast<double>();
  state.m = cfg.beta1 * state.m + (1 - cfg.beta1) * g;
  state.v = cfg.beta2 * state.v + (1 - cfg.beta2) * g.square();
  const double c1 = 1 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const Eigen::ArrayXd delta = cfg.lr * (state.m / c1) / ((state.v / c2).sqrt() + cfg.eps);
  param.data() = (param.data().template cast<double>() - delta).template cast<Scalar>();
}

template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<NamedParam<Scalar>> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg), states_(params_.size()) {}

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i].tensor, states_[i], cfg_);
  }
  void zero_grad() {
    for (auto& p : params_) p.tensor->zero_grad();
  }
  AdamConfig& config() { return cfg_; }

 private:
  std::vector<NamedParam<Scalar>> params_;
  AdamConfig cfg_;
  std::vector<AdamState> states_;
};

}  // namespace phaseforge::nn
