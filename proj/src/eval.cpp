#include "phaseforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>

#include "phaseforge/dltpu.hpp"
#include "phaseforge/error.hpp"
#include "phaseforge/parallel.hpp"

namespace phaseforge::eval {

namespace {

void check_dims(const Eigen::Index rows, const Eigen::Index cols, const Mask& mask) {
  if (mask.rows() != rows || mask.cols() != cols) {
    throw Error(Errc::DimensionMismatch, "maps and mask differ in size");
  }
}

}  // namespace

double error_rate(const FringeOrderMap& predicted, const FringeOrderMap& reference, const Mask& mask) {
  if (!same_shape(predicted.k, reference.k)) throw Error(Errc::DimensionMismatch, "order maps differ in size");
  check_dims(predicted.k.rows(), predicted.k.cols(), mask);
  const auto valid = mask.count();
  if (valid == 0) return 0.0;
  const auto wrong = (mask && (predicted.k != reference.k)).count();
  return static_cast<double>(wrong) / static_cast<double>(valid);
}

double sigma_dphi(const PhaseMap<double>& predicted, const PhaseMap<double>& reference, const Mask& mask) {
  if (!same_shape(predicted.values, reference.values)) throw Error(Errc::DimensionMismatch, "phase maps differ in size");
  check_dims(predicted.values.rows(), predicted.values.cols(), mask);
  double sum = 0, sum_sq = 0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (!mask.data()[i]) continue;
    const double d = predicted.values.data()[i] - reference.values.data()[i];
    if (std::abs(d) >= std::numbers::pi) continue;
    sum += d;
    sum_sq += d * d;
    ++n;
  }
  if (n == 0) throw Error(Errc::EmptyMask, "no correctly unwrapped pixel under the mask");
  const double mean = sum / static_cast<double>(n);
  return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean));
}

void Tally::add(const OrderGrid& k_pred, const OrderGrid& k_ref, const PhaseMap<double>& Phi_pred,
                const PhaseMap<double>& Phi_ref, const Mask& mask) {
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (!mask.data()[i]) continue;
    ++valid;
    if (k_pred.data()[i] != k_ref.data()[i]) {
      ++wrong;
      continue;
    }
    const double d = Phi_pred.values.data()[i] - Phi_ref.values.data()[i];
    ++correct;
    sum += d;
    sum_sq += d * d;
  }
}

void Tally::merge(const Tally& o) {
  valid += o.valid;
  wrong += o.wrong;
  correct += o.correct;
  sum += o.sum;
  sum_sq += o.sum_sq;
}

double Tally::error_rate() const {
  return valid == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(valid);
}

double Tally::sigma() const {
  if (correct == 0) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(correct);
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, sum_sq / n - mean * mean));
}

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "frequency") return SweepKind::frequency;
  if (name == "exposure") return SweepKind::exposure;
  if (name == "gamma") return SweepKind::gamma;
  if (name == "noise") return SweepKind::noise;
  throw Error(Errc::Config, "unknown sweep kind '" + name + "'");
}

std::string to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::frequency: return "frequency";
    case SweepKind::exposure: return "exposure";
    case SweepKind::gamma: return "gamma";
    case SweepKind::noise: return "noise";
  }
  return "unknown";
}

std::vector<double> sweep_values(SweepKind kind) {
  switch (kind) {
    case SweepKind::frequency: return {8, 16, 32, 48, 64};
    // Relative to the longest exposure of a 39/20/15/10 ms series.
    case SweepKind::exposure: return {1.0, 0.5, 0.375, 0.25};
    case SweepKind::gamma: {
      std::vector<double> v;
      for (int i = 0; i <= 10; ++i) v.push_back((5 + i) / 10.0);
      return v;
    }
    case SweepKind::noise: return {0.0, 0.005, 0.01, 0.015, 0.02, 0.03};
  }
  return {};
}

SweepConfig sweep_from_manifest(const Manifest& manifest) {
  SweepConfig cfg;
  cfg.prior = manifest.prior;
  cfg.modulation_threshold = manifest.modulation_threshold;
  const AcquisitionSpec& unit = manifest.acquisition(1);
  cfg.base = unit;
  for (const SceneRecord& s : manifest.scenes) {
    if (s.split == "test") cfg.scene_seeds.push_back(s.seed);
  }
  if (cfg.scene_seeds.empty()) {
    throw Error(Errc::MissingData, "dataset has no test scenes to sweep over");
  }
  return cfg;
}

AcquisitionSpec cell_acquisition(const SweepConfig& cfg, double value) {
  AcquisitionSpec a = cfg.base;
  switch (cfg.kind) {
    case SweepKind::frequency: break;
    case SweepKind::exposure: a.exposure = value; break;
    case SweepKind::gamma: a.gamma = value; break;
    case SweepKind::noise: a.noise_sigma = value; break;
  }
  return a;
}

MetricsRecord evaluate_cell(const SweepConfig& cfg, const std::string& method, int f_h,
                            const AcquisitionSpec& acquisition) {
  if (method != "mftpu" && method != "mftpu3f" && method != "dltpu") {
    throw Error(Errc::Config, "unknown method '" + method + "'");
  }
  if (cfg.scene_seeds.empty()) throw Error(Errc::MissingData, "no scenes to evaluate");

  std::optional<nn::Checkpoint> ckpt;
  if (method == "dltpu") {
    auto it = cfg.checkpoints.find(f_h);
    if (it == cfg.checkpoints.end() || !std::filesystem::exists(it->second)) {
      throw Error(Errc::MissingCheckpoint, "no DL-TPU checkpoint for f_h=" + std::to_string(f_h));
    }
    ckpt = nn::read_checkpoint(it->second);
    if (dltpu::DlTpuModel<float>::from_checkpoint(*ckpt).f_h() != f_h) {
      throw Error(Errc::FrequencyMismatch, it->second.string() + " was not trained for f_h=" + std::to_string(f_h));
    }
  }

  auto with_frequency = [&](int f, std::uint64_t seed) {
    AcquisitionSpec a = acquisition;
    a.frequency = f;
    return scene_acquisition(a, seed);
  };

  std::vector<Tally> tallies(cfg.scene_seeds.size());
  parallel_for(cfg.scene_seeds.size(), cfg.threads, [&](std::size_t i) {
    const std::uint64_t seed = cfg.scene_seeds[i];
    const SceneSpec scene = random_scene(cfg.prior, seed);
    const UnwrapInputs in = retrieve_inputs(render_stack(scene, with_frequency(1, seed)),
                                            render_stack(scene, with_frequency(f_h, seed)),
                                            cfg.modulation_threshold);
    const PhaseMap<double> Phi_ref = absolute_phase(scene, f_h);
    const OrderGrid k_ref = reference_orders(Phi_ref, in.phi_h);
    const Mask mask = evaluation_mask(in.mask, k_ref, f_h);

    if (method == "mftpu") {
      const UnwrapResult<double> r = unwrap_two_freq(in.Phi_1, in.phi_h, mask);
      tallies[i].add(r.orders.k, k_ref, r.absolute, Phi_ref, mask);
    } else if (method == "mftpu3f") {
      const int f_mid = std::min(cfg.f_mid, f_h);
      const PhaseMap<double> phi_mid = retrieve_phase(render_stack(scene, with_frequency(f_mid, seed)));
      const UnwrapResult<double> r = unwrap_hierarchical(in.Phi_1, phi_mid, in.phi_h, mask);
      tallies[i].add(r.orders.k, k_ref, r.absolute, Phi_ref, mask);
    } else {
      auto model = dltpu::DlTpuModel<float>::from_checkpoint(*ckpt);
      const dltpu::Prediction p = dltpu::infer(model, in.Phi_1, in.phi_h, mask);
      tallies[i].add(p.orders.k, k_ref, p.absolute, Phi_ref, mask);
    }
  });

  Tally total;
  for (const Tally& t : tallies) total.merge(t);
  MetricsRecord r;
  r.method = method;
  r.f_h = f_h;
  r.error_rate = total.error_rate();
  r.sigma_dphi = total.sigma();
  r.n_valid = total.valid;
  r.noise_sigma = acquisition.noise_sigma;
  r.gamma = acquisition.gamma;
  r.exposure = acquisition.exposure;
  return r;
}

MetricsRecord evaluate_dataset(const std::filesystem::path& root, const std::string& method, int f_h, int f_mid,
                               const std::filesystem::path& checkpoint, double modulation_threshold, int threads) {
  if (method != "mftpu" && method != "mftpu3f" && method != "dltpu") {
    throw Error(Errc::Config, "unknown method '" + method + "'");
  }
  const Manifest manifest = read_manifest(root);
  std::vector<SceneRecord> scenes;
  for (const SceneRecord& s : manifest.scenes) {
    if (s.split == "test") scenes.push_back(s);
  }
  if (scenes.empty()) throw Error(Errc::MissingData, "dataset has no test scenes");
  const int mid = std::min(f_mid, f_h);
  if (method == "mftpu3f" && !manifest.has_frequency(mid)) {
    throw Error(Errc::DatasetMissingFrequency, "dataset lacks the mid frequency f=" + std::to_string(mid));
  }
  std::optional<nn::Checkpoint> ckpt;
  if (method == "dltpu") {
    if (checkpoint.empty()) throw Error(Errc::MissingCheckpoint, "dltpu needs a checkpoint");
    ckpt = nn::read_checkpoint(checkpoint);
    if (dltpu::DlTpuModel<float>::from_checkpoint(*ckpt).f_h() != f_h) {
      throw Error(Errc::FrequencyMismatch, "checkpoint was not trained for f_h=" + std::to_string(f_h));
    }
  }

  std::vector<Tally> tallies(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    const SceneInputs s = load_scene(root, manifest, scenes[i], f_h, modulation_threshold);
    if (method == "mftpu") {
      const UnwrapResult<double> r = unwrap_two_freq(s.inputs.Phi_1, s.inputs.phi_h, s.mask);
      tallies[i].add(r.orders.k, s.k_ref, r.absolute, s.Phi_ref, s.mask);
    } else if (method == "mftpu3f") {
      const AcquisitionSpec acq = scene_acquisition(manifest.acquisition(mid), scenes[i].seed);
      const PhaseMap<double> phi_mid = retrieve_phase(load_stack(scene_dir(root, scenes[i]), acq));
      const UnwrapResult<double> r = unwrap_hierarchical(s.inputs.Phi_1, phi_mid, s.inputs.phi_h, s.mask);
      tallies[i].add(r.orders.k, s.k_ref, r.absolute, s.Phi_ref, s.mask);
    } else {
      auto model = dltpu::DlTpuModel<float>::from_checkpoint(*ckpt);
      const dltpu::Prediction p = dltpu::infer(model, s.inputs.Phi_1, s.inputs.phi_h, s.mask);
      tallies[i].add(p.orders.k, s.k_ref, p.absolute, s.Phi_ref, s.mask);
    }
  });

  Tally total;
  for (const Tally& t : tallies) total.merge(t);
  const AcquisitionSpec& acq = manifest.acquisition(f_h);
  MetricsRecord r;
  r.method = method;
  r.f_h = f_h;
  r.sweep_kind = "none";
  r.error_rate = total.error_rate();
  r.sigma_dphi = total.sigma();
  r.n_valid = total.valid;
  r.noise_sigma = acq.noise_sigma;
  r.gamma = acq.gamma;
  r.exposure = acq.exposure;
  return r;
}

std::vector<MetricsRecord> run_sweep(const SweepConfig& cfg) {
  std::vector<MetricsRecord> out;
  const std::vector<double> values = sweep_values(cfg.kind);
  for (const std::string& method : cfg.methods) {
    for (double value : values) {
      const int f_h = cfg.kind == SweepKind::frequency ? static_cast<int>(value) : cfg.f_h;
      MetricsRecord r = evaluate_cell(cfg, method, f_h, cell_acquisition(cfg, value));
      r.sweep_kind = to_string(cfg.kind);
      r.sweep_value = value;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string csv_header() { return "method,f_h,sweep_kind,sweep_value,error_rate,sigma_dphi,n_valid"; }

std::string csv_row(const MetricsRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%d,%s,%.6g,%.9g,%.9g,%zu", r.method.c_str(), r.f_h, r.sweep_kind.c_str(),
                r.sweep_value, r.error_rate, r.sigma_dphi, r.n_valid);
  return buf;
}

std::string to_csv(const std::vector<MetricsRecord>& records) {
  std::string out = csv_header() + "\n";
  for (const MetricsRecord& r : records) out += csv_row(r) + "\n";
  return out;
}

}  // namespace phaseforge::eval
