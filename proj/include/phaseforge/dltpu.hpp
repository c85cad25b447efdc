#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "phaseforge/grid.hpp"
#include "phaseforge/nn/checkpoint.hpp"
#include "phaseforge/nn/layers.hpp"
#include "phaseforge/phase.hpp"
#include "phaseforge/tpu.hpp"

namespace phaseforge::dltpu {

using nn::Tensor;

inline constexpr int kInputChannels = 2;
inline constexpr int kWidth = 16;
inline constexpr int kFuseWidth = 2 * kWidth;

/// Fringe-order classifier over K = f_h classes. Input (2, H, W) with even
/// H and W; output logits (f_h, H, W).
///
///   path A: conv3x3(2->16), 2 residual blocks
///   path B: maxpool2, conv3x3(2->16), 2 residual blocks, upsample2
///   concat(A, B) -> conv3x3(32->32) -> relu -> conv1x1(32->f_h)
template <typename Scalar>
class DlTpuModel {
 public:
  explicit DlTpuModel(int f_h, std::uint64_t seed = 0)
      : f_h_(f_h),
        stem_full_(kInputChannels, kWidth, 3),
        full1_(kWidth),
        full2_(kWidth),
        stem_half_(kInputChannels, kWidth, 3),
        half1_(kWidth),
        half2_(kWidth),
        fuse_(kFuseWidth, kFuseWidth, 3),
        head_(kFuseWidth, f_h, 1) {
    if (f_h < 2) throw Error(Errc::Config, "DL-TPU needs f_h >= 2");
    std::mt19937_64 rng(seed);
    stem_full_.initialize(rng);
    full1_.initialize(rng);
    full2_.initialize(rng);
    stem_half_.initialize(rng);
    half1_.initialize(rng);
    half2_.initialize(rng);
    fuse_.initialize(rng);
    head_.initialize(rng);
  }

  int f_h() const { return f_h_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& input) {
    nn::require_rank(input, 3, "DL-TPU input");
    if (input.channels() != kInputChannels) {
      throw Error(Errc::ShapeMismatch, "DL-TPU input needs 2 channels, got " + nn::shape_string(input.shape()));
    }
    input_shape_ = input.shape();
    Tensor<Scalar> a = full2_.forward(full1_.forward(stem_full_.forward(input)));
    nn::PoolResult<Scalar> pooled = nn::maxpool2_forward(input);
    pool_argmax_ = std::move(pooled.argmax);
    Tensor<Scalar> b = nn::upsample2_forward(half2_.forward(half1_.forward(stem_half_.forward(pooled.output))));
    fused_ = fuse_.forward(nn::concat_forward(a, b));
    return head_.forward(nn::relu_forward(fused_));
  }

  /// Accumulates parameter gradients for the last forward() call.
  void backward(const Tensor<Scalar>& grad_logits) {
    Tensor<Scalar> g = fuse_.backward(nn::relu_backward(fused_, head_.backward(grad_logits)));
    auto [ga, gb] = nn::concat_backward(g, kWidth);
    stem_full_.backward(full1_.backward(full2_.backward(ga)));
    Tensor<Scalar> gh = stem_half_.backward(half1_.backward(half2_.backward(nn::upsample2_backward(gb))));
    // The input gradient is not needed; running the pool adjoint keeps the
    // shapes checked.
    (void)nn::maxpool2_backward(input_shape_, pool_argmax_, gh);
  }

  std::vector<nn::NamedParam<Scalar>> parameters() {
    std::vector<nn::NamedParam<Scalar>> out;
    stem_full_.collect("full.stem", out);
    full1_.collect("full.res1", out);
    full2_.collect("full.res2", out);
    stem_half_.collect("half.stem", out);
    half1_.collect("half.res1", out);
    half2_.collect("half.res2", out);
    fuse_.collect("fuse", out);
    head_.collect("head", out);
    return out;
  }

  Eigen::Index parameter_count() {
    Eigen::Index n = 0;
    for (auto& p : parameters()) n += p.tensor->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor->zero_grad();
  }

  nn::Checkpoint to_checkpoint() {
    nn::Checkpoint ckpt;
    ckpt.push_back({"meta.f_h", {1}, {static_cast<float>(f_h_)}});
    ckpt.push_back({"meta.arch", {4},
                    {float(kInputChannels), float(kWidth), float(kFuseWidth), 2.0f}});
    for (auto& p : parameters()) {
      std::vector<float> values(static_cast<std::size_t>(p.tensor->size()));
      for (Eigen::Index i = 0; i < p.tensor->size(); ++i) values[static_cast<std::size_t>(i)] = static_cast<float>(p.tensor->data()[i]);
      ckpt.push_back({p.name, p.tensor->shape(), std::move(values)});
    }
    return ckpt;
  }

  static DlTpuModel from_checkpoint(const nn::Checkpoint& ckpt) {
    const nn::CheckpointEntry* fh = nn::find_entry(ckpt, "meta.f_h");
    if (fh == nullptr || fh->values.size() != 1) throw Error(Errc::Io, "checkpoint lacks meta.f_h");
    DlTpuModel model(static_cast<int>(fh->values[0]));
    for (auto& p : model.parameters()) {
      const nn::CheckpointEntry* e = nn::find_entry(ckpt, p.name);
      if (e == nullptr) throw Error(Errc::Io, "checkpoint lacks " + p.name);
      if (e->shape != p.tensor->shape()) {
        throw Error(Errc::ShapeMismatch, "checkpoint tensor " + p.name + " has shape " + nn::shape_string(e->shape));
      }
      for (Eigen::Index i = 0; i < p.tensor->size(); ++i) p.tensor->data()[i] = static_cast<Scalar>(e->values[static_cast<std::size_t>(i)]);
    }
    return model;
  }

  template <typename Other>
  DlTpuModel<Other> cast() {
    DlTpuModel<Other> out(f_h_);
    auto src = parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].tensor->data() = src[i].tensor->data().template cast<Other>();
    return out;
  }

 private:
  int f_h_;
  nn::Conv2d<Scalar> stem_full_;
  nn::ResidualBlock<Scalar> full1_, full2_;
  nn::Conv2d<Scalar> stem_half_;
  nn::ResidualBlock<Scalar> half1_, half2_;
  nn::Conv2d<Scalar> fuse_;
  nn::Conv2d<Scalar> head_;

  nn::Shape input_shape_;
  std::vector<Eigen::Index> pool_argmax_;
  Tensor<Scalar> fused_;
};

/// Parameter count from the layer list: sum of O*C*kh*kw + O per convolution.
int expected_parameter_count(int f_h);

/// Normalised network input. Channel 0 is the unit-frequency phase over one
/// period, channel 1 the wrapped high-frequency phase shifted to [0, 1];
/// pixels outside the mask are zero.
template <typename Scalar = float>
Tensor<Scalar> make_input(const PhaseMap<double>& Phi_l, const PhaseMap<double>& phi_h, const Mask& mask) {
  if (!same_shape(Phi_l.values, phi_h.values) || !same_shape(mask, phi_h.values)) {
    throw Error(Errc::DimensionMismatch, "make_input: phase maps and mask differ in size");
  }
  constexpr double pi = std::numbers::pi;
  const int H = static_cast<int>(phi_h.values.rows()), W = static_cast<int>(phi_h.values.cols());
  const double offset = Phi_l.kind == PhaseKind::wrapped ? pi : 0.0;
  Tensor<Scalar> t({kInputChannels, H, W});
  const Eigen::Index plane = static_cast<Eigen::Index>(H) * W;
  for (Eigen::Index p = 0; p < plane; ++p) {
    if (!mask.data()[p]) continue;
    t.data()[p] = static_cast<Scalar>((Phi_l.values.data()[p] + offset) / (2 * pi));
    t.data()[plane + p] = static_cast<Scalar>((phi_h.values.data()[p] + pi) / (2 * pi));
  }
  return t;
}

/// Per-pixel argmax over channels; ties go to the lowest index.
template <typename Scalar>
OrderGrid argmax_orders(const Tensor<Scalar>& logits) {
  const int K = logits.channels(), H = logits.height(), W = logits.width();
  const Eigen::Index plane = static_cast<Eigen::Index>(H) * W;
  OrderGrid k(H, W);
  for (Eigen::Index p = 0; p < plane; ++p) {
    int best = 0;
    for (int c = 1; c < K; ++c) {
      if (logits.data()[c * plane + p] > logits.data()[best * plane + p]) best = c;
    }
    k.data()[p] = best;
  }
  return k;
}

struct Prediction {
  FringeOrderMap orders;
  PhaseMap<double> absolute;
};

template <typename Scalar>
Prediction infer(DlTpuModel<Scalar>& model, const PhaseMap<double>& Phi_l, const PhaseMap<double>& phi_h,
                 const Mask& mask) {
  if (phi_h.frequency != model.f_h()) {
    throw Error(Errc::FrequencyMismatch, "model trained for f_h=" + std::to_string(model.f_h()) +
                                             ", phase has f=" + std::to_string(phi_h.frequency));
  }
  const Tensor<Scalar> logits = model.forward(make_input<Scalar>(Phi_l, phi_h, mask));
  Prediction out;
  out.orders = {argmax_orders(logits), model.f_h(), mask};
  out.absolute = {phi_h.values, PhaseKind::absolute, model.f_h()};
  for (Eigen::Index i = 0; i < out.absolute.values.size(); ++i) {
    if (mask.data()[i]) out.absolute.values.data()[i] += 2 * std::numbers::pi * out.orders.k.data()[i];
  }
  return out;
}

// One training/test image: network input, ground-truth orders and the
// pixels that count.
struct Sample {
  Tensor<float> input;
  OrderGrid target;
  Mask mask;
};

struct TrainConfig {
  int f_h = 32;
  int epochs = 1;
  double lr = 1e-3;
  double final_lr_fraction = 1.0;  // cosine decay to lr * fraction over the run
  std::uint64_t seed = 0;
  int patch = 64;
  int batch = 1;                   // crops per optimizer step
  int samples_per_epoch = 0;       // 0 = one crop per training image
  double modulation_threshold = 0.08;
  std::filesystem::path dataset;
  std::filesystem::path checkpoint;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double test_error_rate = 0;
};

using ProgressFn = std::function<void(const EpochLog&)>;

/// Masked softmax cross-entropy training with Adam. Deterministic given
/// cfg.seed and the sample order.
std::vector<EpochLog> train(DlTpuModel<float>& model, const std::vector<Sample>& train_set,
                            const std::vector<Sample>& test_set, const TrainConfig& cfg,
                            const ProgressFn& progress = {});

/// Masked order error rate of the model over full-size samples.
double evaluate_error_rate(DlTpuModel<float>& model, const std::vector<Sample>& samples);

std::string log_csv(const std::vector<EpochLog>& log);

/// Every scene of a dataset split as a sample for f_h.
std::vector<Sample> load_samples(const std::filesystem::path& root, const std::string& split, int f_h,
                                 double modulation_threshold, int threads = 1);

struct TrainResult {
  nn::Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

/// Trains a fresh model seeded with cfg.seed on cfg.dataset and writes the
/// checkpoint to cfg.checkpoint when one is given.
TrainResult train_on_dataset(const TrainConfig& cfg, const ProgressFn& progress = {}, int threads = 1);

}  // namespace phaseforge::dltpu
