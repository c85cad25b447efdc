#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "phaseforge/fringe_stack.hpp"
#include "phaseforge/phase.hpp"
#include "phaseforge/sim.hpp"

// On-disk synthetic datasets:
//   <root>/manifest.txt                      key=value lines
//   <root>/<split>/<scene>/I_f{f}_n{n}.pud   uint8 (8-bit) or float32 intensities
//   <root>/<split>/<scene>/phi_abs_f{f}.pud  float32 ground-truth absolute phase
//   <root>/<split>/<scene>/k_f{f}.pud        int32 ground-truth fringe order
//   <root>/<split>/<scene>/mask.pud          uint8 valid-pixel mask
namespace phaseforge {

struct DatasetConfig {
  int n_scenes = 1;
  ScenePrior prior;
  // One entry per frequency; per-scene seeds are derived from master_seed,
  // so the seed fields here are ignored.
  std::vector<AcquisitionSpec> acquisitions;
  std::uint64_t master_seed = 0;
  double train_fraction = 0.8;
  double modulation_threshold = kDefaultModulationThreshold;
  int threads = 1;
  bool force = false;
};

struct DatasetSummary {
  int n_train = 0;
  int n_test = 0;
  std::vector<int> frequencies;
  std::size_t files_written = 0;
};

struct SceneRecord {
  int index = 0;
  std::string split;  // "train" or "test"
  std::uint64_t seed = 0;
};

struct Manifest {
  std::map<std::string, std::string> entries;
  std::uint64_t master_seed = 0;
  ScenePrior prior;
  std::vector<AcquisitionSpec> acquisitions;
  double modulation_threshold = kDefaultModulationThreshold;
  std::vector<SceneRecord> scenes;

  const AcquisitionSpec& acquisition(int f) const;
  bool has_frequency(int f) const;
};

/// Acquisition actually used for a scene: the template with a seed derived
/// from the scene seed and the frequency.
AcquisitionSpec scene_acquisition(const AcquisitionSpec& base, std::uint64_t scene_seed);

std::uint64_t scene_seed(std::uint64_t master_seed, int index);

DatasetSummary generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& root);

std::string manifest_text(const DatasetConfig& cfg);
Manifest read_manifest(const std::filesystem::path& root);

std::filesystem::path scene_dir(const std::filesystem::path& root, const SceneRecord& scene);
std::string stack_name(int f, int n);

FringeStack<double> load_stack(const std::filesystem::path& dir, const AcquisitionSpec& acq);
PhaseMap<double> load_absolute_phase(const std::filesystem::path& dir, int f);
OrderGrid load_orders(const std::filesystem::path& dir, int f);
Mask load_mask(const std::filesystem::path& dir);

// Everything the unwrappers need for one scene and one high frequency.
struct UnwrapInputs {
  PhaseMap<double> Phi_1;   // unit-frequency absolute phase from the measured stack
  PhaseMap<double> phi_h;   // wrapped high-frequency phase
  Mask mask;                // modulation-valid pixels
};

UnwrapInputs retrieve_inputs(const FringeStack<double>& unit, const FringeStack<double>& high,
                             double modulation_threshold);

/// Order placing the measured wrapped phase closest to the reference,
/// round((Phi_ref - phi_h) / 2pi).
OrderGrid reference_orders(const PhaseMap<double>& Phi_ref, const PhaseMap<double>& phi_h);

// One stored scene prepared for unwrapping at f_h, with its labels.
struct SceneInputs {
  UnwrapInputs inputs;
  PhaseMap<double> Phi_ref;
  OrderGrid k_ref;  // reference_orders against the measured phi_h
  Mask mask;        // evaluation_mask of the modulation mask
};

SceneInputs load_scene(const std::filesystem::path& root, const Manifest& manifest, const SceneRecord& scene,
                       int f_h, double modulation_threshold);

// Pixels that count for evaluation: valid and with a ground-truth order
// inside [0, f_h - 1].
Mask evaluation_mask(const Mask& valid, const OrderGrid& k_ref, int f_h);

}  // namespace phaseforge
