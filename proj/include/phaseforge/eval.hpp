#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "phaseforge/dataset.hpp"
#include "phaseforge/phase.hpp"
#include "phaseforge/sim.hpp"
#include "phaseforge/tpu.hpp"

namespace phaseforge::eval {

struct MetricsRecord {
  std::string method;
  int f_h = 0;
  std::string sweep_kind;
  double sweep_value = 0;
  double error_rate = 0;
  double sigma_dphi = 0;  // NaN when no pixel was unwrapped correctly
  std::size_t n_valid = 0;
  double noise_sigma = 0;
  double gamma = 1;
  double exposure = 1;
};

/// Fraction of masked pixels whose orders differ.
double error_rate(const FringeOrderMap& predicted, const FringeOrderMap& reference, const Mask& mask);

/// Standard deviation of Phi_pred - Phi_ref over masked pixels that were
/// unwrapped to the right period (|difference| < pi).
double sigma_dphi(const PhaseMap<double>& predicted, const PhaseMap<double>& reference, const Mask& mask);

// Running totals so scenes can be pooled in a fixed order.
struct Tally {
  std::size_t valid = 0;
  std::size_t wrong = 0;
  std::size_t correct = 0;
  double sum = 0;
  double sum_sq = 0;

  void add(const OrderGrid& k_pred, const OrderGrid& k_ref, const PhaseMap<double>& Phi_pred,
           const PhaseMap<double>& Phi_ref, const Mask& mask);
  void merge(const Tally& other);
  double error_rate() const;
  double sigma() const;
};

enum class SweepKind { frequency, exposure, gamma, noise };

SweepKind parse_sweep_kind(const std::string& name);
std::string to_string(SweepKind kind);

/// Swept values in output order.
std::vector<double> sweep_values(SweepKind kind);

inline const std::vector<std::string> kMethods = {"mftpu", "mftpu3f", "dltpu"};

struct SweepConfig {
  SweepKind kind = SweepKind::frequency;
  std::vector<std::string> methods = {"mftpu"};
  int f_h = 32;  // high frequency for non-frequency sweeps
  int f_mid = 8;
  AcquisitionSpec base;  // gamma, exposure, noise and quantisation of the baseline
  ScenePrior prior;
  std::vector<std::uint64_t> scene_seeds;
  double modulation_threshold = kDefaultModulationThreshold;
  std::map<int, std::filesystem::path> checkpoints;  // by f_h, needed for dltpu
  int threads = 1;
};

/// Sweep configuration over the test split of a dataset.
SweepConfig sweep_from_manifest(const Manifest& manifest);

/// Acquisition used for one cell of a sweep.
AcquisitionSpec cell_acquisition(const SweepConfig& cfg, double value);

/// Evaluates one method at one high frequency and acquisition over all
/// configured scenes. Scenes are re-rendered from their seeds so every cell
/// sees the same surfaces and noise draws.
MetricsRecord evaluate_cell(const SweepConfig& cfg, const std::string& method, int f_h,
                            const AcquisitionSpec& acquisition);

/// Evaluates one method on the stored test split of a dataset.
MetricsRecord evaluate_dataset(const std::filesystem::path& root, const std::string& method, int f_h,
                               int f_mid = 8, const std::filesystem::path& checkpoint = {},
                               double modulation_threshold = kDefaultModulationThreshold, int threads = 1);

/// One record per (method, swept value), methods outermost.
std::vector<MetricsRecord> run_sweep(const SweepConfig& cfg);

std::string csv_header();
std::string csv_row(const MetricsRecord& r);
std::string to_csv(const std::vector<MetricsRecord>& records);

}  // namespace phaseforge::eval
