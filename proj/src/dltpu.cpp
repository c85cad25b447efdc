#include "phaseforge/dltpu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "phaseforge/dataset.hpp"
#include "phaseforge/nn/ops.hpp"
#include "phaseforge/parallel.hpp"

namespace phaseforge::dltpu {

namespace {

int conv_params(int in, int out, int k) { return out * in * k * k + out; }

Sample crop(const Sample& s, int top, int left, int size) {
  const int C = s.input.channels(), W = s.input.width();
  Sample c{Tensor<float>({C, size, size}), s.target.block(top, left, size, size),
           s.mask.block(top, left, size, size)};
  for (int ch = 0; ch < C; ++ch) {
    for (int y = 0; y < size; ++y) {
      const float* src = s.input.data().data() + (static_cast<Eigen::Index>(ch) * s.input.height() + top + y) * W + left;
      std::copy(src, src + size, c.input.data().data() + (static_cast<Eigen::Index>(ch) * size + y) * size);
    }
  }
  return c;
}

}  // namespace

int expected_parameter_count(int f_h) {
  const int stem = conv_params(kInputChannels, kWidth, 3);
  const int block = 2 * conv_params(kWidth, kWidth, 3);
  const int path = stem + 2 * block;
  return 2 * path + conv_params(kFuseWidth, kFuseWidth, 3) + conv_params(kFuseWidth, f_h, 1);
}

double evaluate_error_rate(DlTpuModel<float>& model, const std::vector<Sample>& samples) {
  std::size_t wrong = 0, total = 0;
  for (const Sample& s : samples) {
    const OrderGrid k = argmax_orders(model.forward(s.input));
    for (Eigen::Index i = 0; i < k.size(); ++i) {
      if (!s.mask.data()[i]) continue;
      ++total;
      if (k.data()[i] != s.target.data()[i]) ++wrong;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(total);
}

std::vector<EpochLog> train(DlTpuModel<float>& model, const std::vector<Sample>& train_set,
                            const std::vector<Sample>& test_set, const TrainConfig& cfg,
                            const ProgressFn& progress) {
  if (cfg.epochs < 1) throw Error(Errc::Config, "epochs must be >= 1");
  if (cfg.patch < 2 || cfg.patch % 2 != 0) throw Error(Errc::Config, "patch size must be even");
  if (cfg.batch < 1) throw Error(Errc::Config, "batch must be >= 1");
  if (train_set.empty()) throw Error(Errc::MissingData, "empty training set");
  if (model.f_h() != cfg.f_h) throw Error(Errc::FrequencyMismatch, "model and config disagree on f_h");

  std::mt19937_64 rng(cfg.seed);
  nn::Adam<float> adam(model.parameters(), nn::AdamConfig{cfg.lr});
  const int per_epoch = cfg.samples_per_epoch > 0 ? cfg.samples_per_epoch : static_cast<int>(train_set.size());
  const long total_steps = static_cast<long>(cfg.epochs) * ((per_epoch + cfg.batch - 1) / cfg.batch);
  long step = 0;

  std::vector<std::size_t> order(train_set.size());
  std::vector<EpochLog> log;
  model.zero_grad();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0;
    int in_batch = 0;
    for (int i = 0; i < per_epoch; ++i) {
      if (static_cast<std::size_t>(i) % train_set.size() == 0) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
      }
      const Sample& full = train_set[order[static_cast<std::size_t>(i) % train_set.size()]];
      const int H = full.input.height(), W = full.input.width();
      const int size = std::min({cfg.patch, H, W}) & ~1;
      const int top = std::uniform_int_distribution<int>(0, H - size)(rng);
      const int left = std::uniform_int_distribution<int>(0, W - size)(rng);
      const Sample patch = crop(full, top, left, size);

      const Tensor<float> logits = model.forward(patch.input);
      const nn::LossResult<float> loss = nn::softmax_cross_entropy(logits, patch.target, patch.mask);
      loss_sum += loss.loss;
      model.backward(loss.grad);

      if (++in_batch == cfg.batch || i + 1 == per_epoch) {
        if (in_batch > 1) {
          for (auto& p : model.parameters()) p.tensor->grad() /= static_cast<float>(in_batch);
        }
        const double progress_frac = total_steps > 1 ? static_cast<double>(step) / (total_steps - 1) : 0.0;
        const double scale = cfg.final_lr_fraction +
                             (1 - cfg.final_lr_fraction) * 0.5 * (1 + std::cos(std::numbers::pi * progress_frac));
        adam.config().lr = cfg.lr * scale;
        adam.step();
        adam.zero_grad();
        ++step;
        in_batch = 0;
      }
    }
    EpochLog entry{epoch, loss_sum / per_epoch, test_set.empty() ? 0.0 : evaluate_error_rate(model, test_set)};
    log.push_back(entry);
    if (progress) progress(entry);
  }
  return log;
}

std::string log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_loss,test_error_rate\n";
  char line[128];
  for (const EpochLog& e : log) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g\n", e.epoch, e.train_loss, e.test_error_rate);
    out += line;
  }
  return out;
}

std::vector<Sample> load_samples(const std::filesystem::path& root, const std::string& split, int f_h,
                                 double modulation_threshold, int threads) {
  const Manifest manifest = read_manifest(root);
  std::vector<SceneRecord> scenes;
  for (const SceneRecord& s : manifest.scenes) {
    if (s.split == split) scenes.push_back(s);
  }
  std::vector<Sample> out(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    const SceneInputs s = load_scene(root, manifest, scenes[i], f_h, modulation_threshold);
    out[i] = Sample{make_input<float>(s.inputs.Phi_1, s.inputs.phi_h, s.mask), s.k_ref, s.mask};
  });
  return out;
}

TrainResult train_on_dataset(const TrainConfig& cfg, const ProgressFn& progress, int threads) {
  const std::vector<Sample> train_set = load_samples(cfg.dataset, "train", cfg.f_h, cfg.modulation_threshold, threads);
  const std::vector<Sample> test_set = load_samples(cfg.dataset, "test", cfg.f_h, cfg.modulation_threshold, threads);
  DlTpuModel<float> model(cfg.f_h, cfg.seed);
  TrainResult r;
  r.log = train(model, train_set, test_set, cfg, progress);
  r.checkpoint = model.to_checkpoint();
  if (!cfg.checkpoint.empty()) nn::write_checkpoint(cfg.checkpoint, r.checkpoint);
  return r;
}

}  // namespace phaseforge::dltpu
